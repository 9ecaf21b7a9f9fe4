import json

import pytest

from hodgelab.config import ConfigError, build_ledger, load_config, parse_config
from hodgelab.dec import PeriodicGrid
from hodgelab.metrics import metric_to_bytes, random_rough_metric

BASE = {"version": 1, "experiment": "spectrum", "n": 2, "N": 8, "metric": {"kind": "flat"}}


def text(**over):
    d = dict(BASE, **over)
    return json.dumps({k: v for k, v in d.items() if v is not None}, indent=2)


def test_minimal_config():
    cfg = parse_config(text())
    assert (cfg.n, cfg.N, cfg.solver.tol) == (2, (8,), 1e-10)


def test_missing_n():
    with pytest.raises(ConfigError, match="missing required key 'n'"):
        parse_config(text(n=None))


def test_error_points_at_line():
    src = text(metric={"kind": "conformal", "beta": 0.5, "p_int": 6.5}, n=3)
    with pytest.raises(ConfigError) as exc:
        parse_config(src)
    line = next(i + 1 for i, s in enumerate(src.splitlines()) if '"p_int"' in s)
    assert exc.value.line == line and str(exc.value).startswith(f"line {line}:")


@pytest.mark.parametrize("over,msg", [
    ({"experiment": "plot"}, "experiment must be one of"),
    ({"n": 5}, "outside"),
    ({"N": 2}, "outside"),
    ({"colour": "red"}, "unknown key"),
    ({"metric": {"kind": "lava"}}, "metric kind"),
    ({"solver": {"mode": "magic"}}, "solver.mode"),
    ({"fit_window": [0.7, 0.2]}, "increasing"),
    ({"version": 2}, "schema version"),
    ({"experiment": "decay", "N": [16]}, "two resolutions"),
    ({"experiment": "homotopy"}, "homotopy"),
    ({"metric": {"kind": "file", "path": "nope.bin"}}, "does not exist"),
])
def test_rejections(over, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text(**over))


def test_invalid_json_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_config('{\n  "n": 2,\n  "N": ,\n}')
    assert exc.value.line == 3


def test_hash_stable_under_reserialization():
    a = parse_config(text())
    b = parse_config(json.dumps(dict(reversed(list(BASE.items())))))
    assert a.config_hash() == b.config_hash()
    assert parse_config(text(N=16)).config_hash() != a.config_hash()


def test_seed_override():
    assert parse_config(text(seed=3)).seed == 3
    assert parse_config(text(seed=3), seed=9).seed == 9


def test_metric_file(tmp_path):
    g = PeriodicGrid(2, 8)
    (tmp_path / "m.bin").write_bytes(metric_to_bytes(random_rough_metric(g, 3.0, 1)))
    p = tmp_path / "c.json"
    p.write_text(text(metric={"kind": "file", "path": "m.bin"}))
    assert load_config(p).metric["path"] == "m.bin"


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(tmp_path / "absent.json")


def test_default_ledgers():
    assert build_ledger({}, 3, {"kind": "flat"}).n_g == 3
    assert build_ledger({"source": "lp_derivable", "p": 7}, 3).n_g == pytest.approx(21)
    assert build_ledger({"source": "quasiconformal", "p": 6}, 3).n_g == pytest.approx(6)
