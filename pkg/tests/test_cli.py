import json
import math
import subprocess
import sys

import numpy as np
import pytest

from cefdist import cli
from cefdist.expfam import Family
from cefdist.specfile import mixture_to_dict

from helpers import rand_mixture


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def bern_doc(*lams, weights=None):
    weights = weights or [1.0 / len(lams)] * len(lams)
    return {"family": "bernoulli", "components": [{"weight": w, "params": {"lambda": l}} for w, l in zip(weights, lams)]}


def gauss_doc(*pairs):
    return {"family": {"kind": "gaussian", "dim": 1},
            "components": [{"weight": 1.0 / len(pairs), "params": {"mu": [mu], "sigma": [var]}} for mu, var in pairs]}


@pytest.fixture
def files(tmp_path):
    return {
        "p": write(tmp_path, "p.json", bern_doc(0.25)),
        "q": write(tmp_path, "q.json", bern_doc(0.75)),
        "half": write(tmp_path, "half.json", bern_doc(0.5)),
        "pq": write(tmp_path, "pq.json", bern_doc(0.25, 0.75)),
        "ppp": write(tmp_path, "ppp.json", bern_doc(0.25, 0.25, 0.25, weights=[0.2, 1.0, 3.0])),
        "g": write(tmp_path, "g.json", gauss_doc((0.0, 1.0), (1.5, 0.5))),
        "std": write(tmp_path, "std.json", gauss_doc((0.0, 1.0))),
        "bad": write(tmp_path, "bad.json", gauss_doc((0.0, -1.0))),
    }


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def structured(capsys, *argv):
    code, out, err = run(capsys, *argv, "--output", "structured")
    return code, json.loads(out), err


def test_dist_examples(capsys, files):
    code, rec, _ = structured(capsys, "dist", "--metric", "M", "--alpha", "2", files["p"], files["q"])
    assert code == 0 and rec["value"] == pytest.approx(math.sqrt(0.5), rel=1e-15)
    assert rec["method"] == "closed-form" and rec["term_count"] == 4 and rec["stderr"] is None
    code, rec, _ = structured(capsys, "dist", "--metric", "D", "--alpha", "3", files["g"], files["g"])
    assert code == 0 and abs(rec["value"]) <= 1e-10
    code, out, err = run(capsys, "dist", "--metric", "M", "--alpha", "3", files["g"], files["g"])
    assert code == 3 and "even" in err and "--oracle" in err


def test_dist_oracle_paths(capsys, files):
    code, rec, _ = structured(capsys, "dist", "--metric", "TV", "--oracle", "exact", files["p"], files["q"])
    assert code == 0 and rec["value"] == pytest.approx(0.5, rel=1e-15) and rec["method"] == "exact"
    code, rec, _ = structured(capsys, "dist", "--metric", "M", "--alpha", "3", "--oracle", "quad", files["g"], files["std"])
    assert code == 0 and rec["value"] > 0
    code, _, err = run(capsys, "dist", "--metric", "TV", files["p"], files["q"])
    assert code == 3
    code, _, err = run(capsys, "dist", "--metric", "M", "--alpha", "2", "--oracle", "quad", files["p"], files["q"])
    assert code == 3 and "quadrature" in err


def test_norm_examples(capsys, files):
    _, rec, _ = structured(capsys, "norm", "--alpha", "2", files["half"])
    assert rec["value"] == pytest.approx(math.sqrt(0.5), rel=1e-15)
    _, rec, _ = structured(capsys, "norm", "--alpha", "2", files["std"])
    assert rec["value"] == pytest.approx((2 * math.sqrt(math.pi)) ** -0.5, rel=1e-12)
    _, rec, _ = structured(capsys, "norm", "--alpha", "1", files["g"])
    assert rec["value"] == pytest.approx(1.0, rel=1e-15)
    _, rec, _ = structured(capsys, "norm", "--alpha", "2.5", "--oracle", "quad", files["std"])
    assert rec["value"] > 0 and rec["method"] == "quad"
    code, _, _ = run(capsys, "norm", "--alpha", "2.5", files["std"])
    assert code == 3


def test_diversity_examples(capsys, files):
    _, rec, _ = structured(capsys, "diversity", "--alpha", "2", files["p"])
    assert rec["value"] == 0.0
    _, rec, _ = structured(capsys, "diversity", "--alpha", "2", files["ppp"])
    assert abs(rec["value"]) <= 1e-10
    _, rec, _ = structured(capsys, "diversity", "--alpha", "2", files["pq"])
    p, q = np.array([0.75, 0.25]), np.array([0.25, 0.75])
    ref = 0.5 * np.linalg.norm(p) + 0.5 * np.linalg.norm(q) - np.linalg.norm(0.5 * p + 0.5 * q)
    assert rec["value"] == pytest.approx(ref, rel=1e-12)


def test_validate_bernoulli_all_pass(capsys, files):
    code, rep, _ = structured(capsys, "validate", files["p"], files["q"], "--metrics", "M,D,L,CS", "--alpha", "2-4")
    assert code == 0 and rep["result"] == "PASS" and rep["method"] == "exact"
    labels = {(r["quantity"], r["alpha"]) for r in rep["rows"]}
    assert ("M", 3) not in labels and ("M", 2) in labels and ("M", 4) in labels
    assert {("D", 3), ("L", 4), ("CS", 2)} <= labels
    assert all(r["status"] == "PASS" for r in rep["rows"])


def test_validate_identical_gaussians(capsys, files):
    code, rep, _ = structured(capsys, "validate", files["g"], files["g"])
    assert code == 0 and rep["method"] == "quad"
    assert all(r["status"] == "PASS" for r in rep["rows"])
    assert all(abs(r["closed_form"]) <= 1e-10 for r in rep["rows"] if r["quantity"] != "norm")


def test_validate_gaussian_2d_monte_carlo(capsys, tmp_path):
    rng = np.random.default_rng(123)
    fam = Family.gaussian(2)
    a = write(tmp_path, "a.json", mixture_to_dict(rand_mixture(fam, 2, rng), "source"))
    b = write(tmp_path, "b.json", mixture_to_dict(rand_mixture(fam, 2, rng), "source"))
    code, rep, _ = structured(capsys, "validate", a, b, "--samples", "1000000", "--seed", "42")
    assert rep["method"] == "mc" and rep["samples"] == 10**6 and rep["seed"] == 42
    assert code == 0, rep
    assert all(r["n_stderr"] is not None and r["n_stderr"] <= 3 for r in rep["rows"])


def test_validate_reports_failure(capsys, files, monkeypatch):
    monkeypatch.setattr(cli.minkdist, "closed_form_distance", lambda kind, m, m2, **kw: 123.0)
    code, out, _ = run(capsys, "validate", files["p"], files["q"], "--metrics", "D", "--alpha", "2")
    assert code == 1 and "FAIL" in out


def test_bench_examples(capsys):
    code, rep, _ = structured(capsys, "bench", "--k", "3,2,5", "--alpha", "4,8,5")
    assert code == 0
    terms = {(r["k"], r["alpha"]): r["terms"] for r in rep["rows"]}
    assert terms[(3, 4)] == 15 and terms[(2, 8)] == 9 and terms[(5, 5)] == 126
    assert all(r["status"] == "OK" for r in rep["rows"])
    code, out, _ = run(capsys, "bench", "--k", "1-2", "--alpha", "2-3", "--family", "wishart", "--dim", "2")
    assert code == 0 and "OK" in out


def test_exit_codes(capsys, files):
    code, _, err = run(capsys, "norm", "--alpha", "2", files["bad"])
    assert code == 2 and "components[0].params.sigma" in err
    code, _, err = run(capsys, "norm", "--alpha", "2", files["bad"] + ".missing")
    assert code == 2
    code, _, err = run(capsys, "norm", "--alpha", "30", files["g"], "--term-cap", "5")
    assert code == 4 and "term cap" in err
    code, _, err = run(capsys, "dist", "--metric", "D", "--alpha", "2", files["p"], files["g"])
    assert code == 2 and "famil" in err
    with pytest.raises(SystemExit) as info:
        cli.main(["dist", "--metric", "XX", files["p"], files["q"]])
    assert info.value.code == 2


def test_unnormalized_warning(capsys, tmp_path, files):
    heavy = write(tmp_path, "heavy.json", bern_doc(0.3, weights=[2.0]))
    code, rec, err = structured(capsys, "dist", "--metric", "D", "--alpha", "2", heavy, files["q"])
    assert code == 0 and rec["warnings"] and "warning" in err


def test_text_output_uses_17_digits(capsys, files):
    _, out, _ = run(capsys, "dist", "--metric", "M", "--alpha", "2", files["p"], files["q"])
    assert "value: 0.70710678118654746" in out or "value: 0.70710678118654757" in out


def test_structured_output_is_deterministic(capsys, files):
    outs = []
    for _ in range(2):
        _, rec, _ = structured(capsys, "dist", "--metric", "L", "--alpha", "3", files["g"], files["std"], "--workers", "4")
        rec.pop("wall_time_ms")
        outs.append(rec)
    assert outs[0] == outs[1]


def test_to_json_formats():
    assert cli.to_json({"a": 0.1, "b": [1, None, True], "c": float("nan")}) == \
        '{"a": 0.10000000000000001, "b": [1, null, true], "c": null}'
    assert cli.parse_range("2-4,7") == [2, 3, 4, 7]


def test_module_entry_point(files):
    proc = subprocess.run([sys.executable, "-m", "cefdist", "dist", "--metric", "M", "--alpha", "2",
                           files["p"], files["q"], "--output", "structured"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["value"] == pytest.approx(math.sqrt(0.5))
