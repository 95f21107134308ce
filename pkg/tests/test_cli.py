import numpy as np
import pytest

from msled.cli import main
from msled.metric import pairwise_multiscale_distances
from msled.retrieval import load_index

from conftest import write_ppm


def _write_corpus(root, classes=("a", "b"), images_per_class=2, size=48, duplicates=False, seed=3):
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    for label in classes:
        base = rng.integers(0, 256, (size, size, 3), dtype=np.uint8)
        for i in range(images_per_class):
            pixels = base if duplicates else rng.integers(0, 256, (size, size, 3), dtype=np.uint8)
            write_ppm(root / f"{label}.{i:04d}.ppm", pixels)


@pytest.fixture
def corpus(tmp_path):
    root = tmp_path / "data"
    _write_corpus(root, classes=("a", "b"), images_per_class=3)
    return root


@pytest.fixture
def built_index(tmp_path, corpus):
    out = tmp_path / "corpus.idx"
    assert main(["index", "--dataset", str(corpus), "--out", str(out)]) == 0
    return out


def test_index_reports_counts_and_timing(tmp_path, corpus, capsys):
    out = tmp_path / "c.idx"
    code = main(["index", "--dataset", str(corpus), "--out", str(out)])
    captured = capsys.readouterr()
    assert code == 0
    assert out.exists()
    assert "images: 6  classes: 2" in captured.out
    assert "s/image" in captured.out
    assert len(load_index(out).entries) == 6


def test_index_empty_directory_fails(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    code = main(["index", "--dataset", str(empty), "--out", str(tmp_path / "x.idx")])
    captured = capsys.readouterr()
    assert code == 2
    assert "no images found" in captured.err


def test_index_single_scale_flag(tmp_path, corpus):
    out = tmp_path / "single.idx"
    assert main(["index", "--dataset", str(corpus), "--out", str(out), "--scales", "1"]) == 0
    index = load_index(out)
    assert index.config.scales == (1.0,)
    assert all(len(e.descriptor.matrices) == 1 for e in index.entries)


def test_index_config_file_and_flag_precedence(tmp_path, corpus):
    cfg = tmp_path / "pipeline.cfg"
    cfg.write_text("window = 5\noverlap = 0.5  # comment\n", encoding="utf-8")
    out_file_only = tmp_path / "file.idx"
    assert main(["index", "--dataset", str(corpus), "--out", str(out_file_only),
                 "--config", str(cfg)]) == 0
    assert load_index(out_file_only).config.window == 5

    out_flag_wins = tmp_path / "flag.idx"
    assert main(["index", "--dataset", str(corpus), "--out", str(out_flag_wins),
                 "--config", str(cfg), "--window", "3"]) == 0
    assert load_index(out_flag_wins).config.window == 3


def test_index_rejects_bad_config_file(tmp_path, corpus, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense = 1\n", encoding="utf-8")
    code = main(["index", "--dataset", str(corpus), "--out", str(tmp_path / "x.idx"),
                 "--config", str(cfg)])
    assert code == 1
    assert "unknown config key" in capsys.readouterr().err


def test_evaluate_duplicate_corpus_perfect_arr(tmp_path, capsys):
    root = tmp_path / "dups"
    _write_corpus(root, classes=("a", "b", "c"), images_per_class=2, duplicates=True)
    out = tmp_path / "dups.idx"
    assert main(["index", "--dataset", str(root), "--out", str(out)]) == 0
    capsys.readouterr()
    csv_path = tmp_path / "rates.csv"
    code = main(["evaluate", "--index", str(out), "--csv", str(csv_path)])
    captured = capsys.readouterr()
    assert code == 0
    assert "ARR(K=2) = 1.000000" in captured.out
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "class,rate"
    assert lines[-1] == "ARR,1.000000"


def test_evaluate_k_equal_to_index_size(built_index, capsys):
    code = main(["evaluate", "--index", str(built_index), "--k", "6", "--jobs", "2"])
    captured = capsys.readouterr()
    assert code == 0
    assert "ARR(K=6) = 1.000000" in captured.out


def test_evaluate_default_csv_path(built_index, capsys):
    code = main(["evaluate", "--index", str(built_index)])
    assert code == 0
    assert built_index.with_name(built_index.name + ".arr.csv").exists()


def test_evaluate_k_out_of_range(built_index, capsys):
    code = main(["evaluate", "--index", str(built_index), "--k", "7"])
    assert code == 1
    assert "k must lie in" in capsys.readouterr().err


def test_evaluate_missing_index_file(tmp_path, capsys):
    code = main(["evaluate", "--index", str(tmp_path / "nope.idx")])
    assert code == 2


def test_query_member_image_is_rank_one(built_index, corpus, capsys):
    probe = sorted(corpus.glob("*.ppm"))[0]
    code = main(["query", "--index", str(built_index), "--image", str(probe), "--k", "1"])
    captured = capsys.readouterr()
    assert code == 0
    assert captured.out.splitlines() == ["1,0,a,0.000000"]


def test_query_k_too_large(built_index, corpus, capsys):
    probe = sorted(corpus.glob("*.ppm"))[0]
    code = main(["query", "--index", str(built_index), "--image", str(probe), "--k", "99"])
    assert code == 1
    assert "k must lie in" in capsys.readouterr().err


def test_query_order_matches_evaluation_ranking(built_index, corpus, capsys):
    probe = sorted(corpus.glob("*.ppm"))[0]
    code = main(["query", "--index", str(built_index), "--image", str(probe), "--k", "6"])
    captured = capsys.readouterr()
    assert code == 0
    printed_ids = [int(line.split(",")[1]) for line in captured.out.splitlines()]

    index = load_index(built_index)
    matrix = pairwise_multiscale_distances([e.descriptor for e in index.entries])
    ids = np.array([e.image_id for e in index.entries])
    expected = [int(ids[j]) for j in np.lexsort((ids, matrix[0]))]
    assert printed_ids == expected


def test_distance_same_id_is_zero(built_index, capsys):
    code = main(["distance", "--index", str(built_index), "--id-a", "2", "--id-b", "2"])
    captured = capsys.readouterr()
    assert code == 0
    total = float(captured.out.splitlines()[-1].split(":")[1])
    # whitening noise on covariance matrices conditioned at ~1e8 leaves a
    # self-distance well below any inter-image distance but above 1e-10
    assert total <= 1e-8


def test_distance_breakdown_sums_and_is_symmetric(built_index, capsys):
    assert main(["distance", "--index", str(built_index), "--id-a", "0", "--id-b", "5"]) == 0
    forward = capsys.readouterr().out.splitlines()
    assert main(["distance", "--index", str(built_index), "--id-a", "5", "--id-b", "0"]) == 0
    backward = capsys.readouterr().out.splitlines()

    parts = [float(line.split(":")[1]) for line in forward if line.startswith("scale")]
    total = float(forward[-1].split(":")[1])
    assert len(parts) == 3
    assert total == pytest.approx(sum(parts), abs=1e-9)
    # swapping ids swaps the whitening side; on matrices conditioned at ~1e8
    # that costs a few 1e-5 of relative accuracy
    assert float(backward[-1].split(":")[1]) == pytest.approx(total, rel=1e-4)


def test_distance_unknown_id(built_index, capsys):
    code = main(["distance", "--index", str(built_index), "--id-a", "0", "--id-b", "42"])
    assert code == 1
    assert "42" in capsys.readouterr().err


@pytest.mark.parametrize("command", ["index", "evaluate", "query", "distance"])
def test_help_exits_zero(command, capsys):
    with pytest.raises(SystemExit) as err:
        main([command, "--help"])
    assert err.value.code == 0


def test_index_help_documents_defaults(capsys):
    with pytest.raises(SystemExit):
        main(["index", "--help"])
    text = capsys.readouterr().out
    for needle in ("3", "32", "0.5", "2/3,1,3/2"):
        assert needle in text


def test_usage_error_exits_one(capsys):
    with pytest.raises(SystemExit) as err:
        main(["index", "--no-such-flag"])
    assert err.value.code == 1
