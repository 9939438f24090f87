import math

import pytest

from symplug import cli
from symplug.errors import ConfigError


def _ini(tmp_path, text):
    path = tmp_path / "run.ini"
    path.write_text(text)
    return str(path)


def test_defaults():
    cfg = cli.load_config()
    assert cfg.eps == tuple(0.2 / 2**k for k in range(5))
    assert cfg.kappa == pytest.approx(math.log(2))
    assert cfg.parity == -1.0


def test_sections_parsed(tmp_path):
    path = _ini(tmp_path, """
[plug]
amp = 0.08
parity = even
[sphere]
eps = 0.2, 0.1
clearance = 0.005
double_check = yes
[moser]
target = 0.02
sequence = 0.05 0.5 0.01 0.25
[rescale]
kappa = 0.5
[dynamics]
n_orbits = 10
""")
    cfg = cli.load_config(path, seed=7, tol_scale=2.0)
    assert cfg.params.amp == 0.08 and cfg.parity == 1.0
    assert cfg.eps == (0.2, 0.1) and cfg.double_check and cfg.clearance == 0.005
    assert cfg.moser_target == 0.02 and cfg.sequence == ((0.05, 0.5), (0.01, 0.25))
    assert cfg.kappa == 0.5 and cfg.n_orbits == 10 and cfg.seed == 7
    assert cfg.tol(1e-6) == pytest.approx(2e-6)


@pytest.mark.parametrize("body", [
    "[sphere]\neps =\n",
    "[sphere]\neps = 0.1, abc\n",
    "[plug]\nparity = sideways\n",
    "[moser]\nsequence = 0.05 0.5 0.01\n",
    "[dynamics]\nn_orbits = many\n",
])
def test_bad_config(tmp_path, body):
    with pytest.raises(ConfigError):
        cli.load_config(_ini(tmp_path, body))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        cli.load_config(str(tmp_path / "nope.ini"))
    assert cli.main(["rescale", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 2


def test_report_guards():
    rep = cli.RunReport("x", 0)
    rep.check("a", True, 1.0)
    with pytest.raises(ValueError):
        rep.check("a", True, 1.0)
    rep.error("b", RuntimeError("boom"))
    text = rep.render()
    assert "PASS  a" in text and "FAIL  b" in text and text.rstrip().endswith("overall: FAIL")


def test_rescale_command(tmp_path, capsys):
    code = cli.main(["rescale", "--out", str(tmp_path)])
    report = (tmp_path / "report.txt").read_text()
    assert code == 0, report
    assert "overall: PASS" in report and "kernels=" in report


def test_rescale_bad_kappa_is_recorded(tmp_path):
    path = _ini(tmp_path, "[rescale]\nkappa = 5\n")
    assert cli.main(["rescale", "--config", path, "--out", str(tmp_path / "o")]) == 1
    assert "FAIL  rescale precondition" in (tmp_path / "o" / "report.txt").read_text()


def test_exit_map_command(tmp_path):
    path = _ini(tmp_path, "[dynamics]\nn_orbits = 40\n")
    assert cli.main(["exit-map", "--config", path, "--out", str(tmp_path), "--seed", "3"]) == 0
    assert "seed=3" in (tmp_path / "report.txt").read_text()


def test_corrupted_profile_fails_plug_check(tmp_path):
    path = _ini(tmp_path, "[plug]\nparity = even\n")
    assert cli.main(["plug-check", "--config", path, "--out", str(tmp_path)]) == 1
    report = (tmp_path / "report.txt").read_text()
    assert "FAIL" in report and "overall: FAIL" in report


def test_plug_check_default(tmp_path):
    assert cli.main(["plug-check", "--out", str(tmp_path)]) == 0
