import pytest

from dagdqn import qnet
from dagdqn.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


@pytest.mark.parametrize("n,expected", [("6", "9765"), ("7", "615195"), ("10", "10180699028325")])
def test_count(capsys, n, expected):
    code, out = run(capsys, "count", "-n", n, "-b", "1")
    assert code == 0 and out.out.strip() == expected


def test_enumerate(capsys, tmp_path):
    path = tmp_path / "all.txt"
    code, out = run(capsys, "enumerate", "-n", "4", "-b", "1", "--out", str(path))
    assert code == 0 and out.out.strip() == "21"
    assert len(path.read_text().splitlines()) == 21


def test_enumerate_cap_error(capsys):
    code, out = run(capsys, "enumerate", "-n", "10", "-b", "1")
    assert code != 0 and "10180699028325" in out.err


def test_census(capsys, tmp_path):
    path = tmp_path / "t.dag"
    path.write_text("dag v1; n=3; b=1; types=0,0,0; edges=1->2,2->3\n")
    code, out = run(capsys, "census", "--target", str(path))
    assert code == 0
    assert "terminal states: 3" in out.out and "isomorphic to target: 1" in out.out


def test_bad_target_text(capsys):
    code, out = run(capsys, "census", "--target", "dag v1; n=2; b=1; types=0,0; edges=2->1")
    assert code == 2 and "position" in out.err


def test_gradcheck(capsys):
    code, out = run(capsys, "gradcheck", "--trials", "3")
    assert code == 0 and "PASS" in out.out


def test_train_then_eval(capsys, tmp_path):
    ckpt = tmp_path / "policy.txt"
    target = "dag v1; n=3; b=1; types=0,0,0; edges=1->2,2->3"
    code, out = run(capsys, "train", "--target", target, "--episodes", "300", "--gamma", "0.9", "--checkpoint", str(ckpt))
    assert code == 0 and ckpt.exists()
    qnet.load_checkpoint(ckpt)
    code, out = run(capsys, "eval", "--target", target, "--checkpoint", str(ckpt))
    assert code == 0 and "reward: 1" in out.out


def test_experiment_and_compare(capsys, tmp_path):
    code, out = run(
        capsys, "experiment", "-n", "3", "--episodes", "5", "--runs", "2", "--agents", "random,dqn", "--output", str(tmp_path / "e")
    )
    assert code == 0 and (tmp_path / "e" / "summary.csv").exists()
    code, out = run(capsys, "compare-actions", "-n", "3", "--episodes", "5", "--runs", "1", "--output", str(tmp_path / "c"))
    assert code == 0 and (tmp_path / "c" / "compare-actions.csv").exists()


def test_smoke_preset_is_byte_identical(capsys, tmp_path):
    outs = []
    for name in ("a", "b"):
        code, _ = run(capsys, "experiment", "--preset", "smoke", "--episodes", "20", "--seed", "3", "--output", str(tmp_path / name))
        assert code == 0
        outs.append({p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir())})
    assert outs[0] == outs[1] and len(outs[0]) == 4
