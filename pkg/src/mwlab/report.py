"""Experiment orchestration and artifact emission.

``run_experiment`` turns a JSON config into a report dict; ``write_outputs``
serializes it.  report.json is a pure function of the config: no
timestamps, no timings, keys sorted, floats through ``repr``.
"""

import csv
import io
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .corpus import operator_for, sparse_corpus, weight_corpus
from .errors import ConfigError, InvalidInputError, MwlabError
from .grid import MAX_CELLS_LOG2, DyadicCube, GridFunction, GridGeometry
from .operators import KernelOperator, kernel_from_spec
from .weights import (ainfty_sc, conjugate, matrix_a1, matrix_ap, reducing_matrix,
                      weight_from_json)

log = logging.getLogger(__name__)

CERTIFICATE_IDS = ("rough-ap", "horm-ap", "a1", "aq", "cf-czo", "cf-rough", "cf-hormander",
                   "endpoint-rough", "endpoint-hormander")
EXTRA_IDS = ("cpq", "apfromrh", "keyap")
THEOREM_IDS = CERTIFICATE_IDS + EXTRA_IDS
HORMANDER_IDS = ("horm-ap", "cf-hormander", "endpoint-hormander")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_INCONCLUSIVE = 0, 1, 2, 3

DEFAULTS = {
    "geometry": {"d": 1, "L": 6},
    "n": 2,
    "weight": {"kind": "identity"},
    "operator": None,
    "p": 2.0,
    "theorems": [],
    "trials": 8,
    "seed": 0,
    "pass_multiplier": 10.0,
    "n_dirs": None,
    "sparse": None,
    "lemmas": None,
    "weights": None,
}


# --- config ---------------------------------------------------------------------

@dataclass
class TheoremSpec:
    id: str
    p: float
    r: float = None
    q: float = None
    gamma: float = None
    operator: dict = None

    def to_json(self):
        out = {"id": self.id, "p": self.p}
        for k in ("r", "q", "gamma", "operator"):
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        return out


@dataclass
class ExperimentConfig:
    d: int
    L: int
    n: int
    weight: dict
    operator: dict
    p: float
    theorems: list
    trials: int
    seed: int
    pass_multiplier: float
    n_dirs: int = None
    sparse: dict = None
    lemmas: dict = None
    weights: list = None
    base_dir: str = "."
    raw: dict = field(default_factory=dict)

    @property
    def geometry(self):
        return GridGeometry(self.d, self.L)

    def to_json(self):
        return {"geometry": {"d": self.d, "L": self.L}, "n": self.n, "weight": self.weight,
                "operator": self.operator, "p": self.p,
                "theorems": [t.to_json() for t in self.theorems], "trials": self.trials,
                "seed": self.seed, "pass_multiplier": self.pass_multiplier,
                "n_dirs": self.n_dirs, "sparse": self.sparse, "lemmas": self.lemmas,
                "weights": self.weights}


def _num(obj, key, cast=float):
    try:
        return cast(obj[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key!r} must be a number") from exc


def _theorem(entry, p_default):
    if isinstance(entry, str):
        entry = {"id": entry}
    if not isinstance(entry, dict) or "id" not in entry:
        raise ConfigError("theorem entries are ids or objects with an 'id'")
    tid = entry["id"]
    if tid not in THEOREM_IDS:
        raise ConfigError(f"unknown theorem id {tid!r}")
    p = float(entry.get("p", p_default))
    r = entry.get("r")
    q = entry.get("q")
    if tid in HORMANDER_IDS and r is None:
        r = 1.5
    if tid == "aq" and q is None:
        q = 1.5
    r = None if r is None else float(r)
    q = None if q is None else float(q)
    # static preconditions rejected at parse time
    if tid not in ("endpoint-rough", "endpoint-hormander") and p <= 1:
        raise ConfigError(f"{tid}: p must exceed 1")
    if tid in ("horm-ap", "cf-hormander") and not 1 < r < p:
        raise ConfigError(f"{tid}: need 1 < r < p")
    if tid == "endpoint-hormander" and r <= 1:
        raise ConfigError(f"{tid}: need r > 1")
    if tid == "aq":
        if not 1 < q < p:
            raise ConfigError("aq: need 1 < q < p")
        if r is not None and not p / q > r:
            raise ConfigError("aq: need p/q > r")
    if tid == "a1" and r is not None and not r < p:
        raise ConfigError("a1: need r < p")
    if tid == "cpq" and not float(entry.get("q", 2 * p)) > p:
        raise ConfigError("cpq: need q > p")
    gamma = entry.get("gamma")
    return TheoremSpec(tid, p, r, q, None if gamma is None else float(gamma),
                       entry.get("operator"))


def parse_config(obj, base_dir="."):
    """Validate a config dict; every problem raises ConfigError."""
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(obj) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = dict(DEFAULTS)
    cfg.update(obj)
    geo = cfg["geometry"]
    if not isinstance(geo, dict):
        raise ConfigError("geometry must be an object {d, L}")
    d, L = _num(geo, "d", int), _num(geo, "L", int)
    if d not in (1, 2):
        raise ConfigError("geometry.d must be 1 or 2")
    if L < 1 or d * L > MAX_CELLS_LOG2:
        raise ConfigError(f"need 1 <= L and d*L <= {MAX_CELLS_LOG2}")
    n = _num(cfg, "n", int)
    if n < 1:
        raise ConfigError("n must be >= 1")
    p = _num(cfg, "p")
    weight = cfg["weight"]
    if not isinstance(weight, dict):
        raise ConfigError("weight must be an object")
    if "path" in weight:
        path = os.path.join(base_dir, weight["path"])
        if not os.path.exists(path):
            raise ConfigError(f"weight file {weight['path']!r} does not exist")
        weight = dict(weight, path=path)
    elif "kind" not in weight:
        raise ConfigError("weight needs 'kind' or 'path'")
    op = cfg["operator"]
    if op is not None and not isinstance(op, dict):
        raise ConfigError("operator must be an object {kind, ...}")
    theorems = [_theorem(t, p) for t in cfg["theorems"]]
    trials = _num(cfg, "trials", int)
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    mult = _num(cfg, "pass_multiplier")
    if mult <= 0:
        raise ConfigError("pass_multiplier must be positive")
    n_dirs = cfg["n_dirs"]
    if n_dirs is not None and int(n_dirs) < 2 * n and n > 1:
        raise ConfigError("n_dirs must be at least 2n")
    sparse = cfg["sparse"]
    if sparse is not None and not isinstance(sparse, dict):
        raise ConfigError("sparse must be an object")
    lemmas = cfg["lemmas"]
    if lemmas is True:
        lemmas = {}
    if lemmas is not None and lemmas is not False and not isinstance(lemmas, dict):
        raise ConfigError("lemmas must be an object or a boolean")
    weights = cfg["weights"]
    if weights is not None and weights != "corpus" and not isinstance(weights, list):
        raise ConfigError("weights must be a list of weight objects or 'corpus'")
    return ExperimentConfig(d, L, n, weight, op, p, theorems, trials, _num(cfg, "seed", int),
                            mult, None if n_dirs is None else int(n_dirs), sparse,
                            None if lemmas is False else lemmas, weights, base_dir, obj)


def load_config(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    return parse_config(obj, os.path.dirname(os.path.abspath(path)))


# --- operators per theorem -------------------------------------------------------

def default_operator(tid, d, r=None):
    """Operator used for a certificate when the config names none.

    d = 1 uses the Hilbert transform for the rough and CZO kinds and the
    square-wave kernel for the Hormander kinds; d = 2 uses a sign-x rough
    kernel and the Riesz kernel respectively.
    """
    horm = tid in HORMANDER_IDS
    if d == 1:
        if horm:
            return KernelOperator("hormander-example", r_prime=conjugate(r))
        return KernelOperator("hilbert")
    if horm:
        return KernelOperator("riesz", r_prime=conjugate(r))
    return operator_for("rough", 0)


def _operator(spec, cfg):
    src = spec.operator or cfg.operator
    if src is None:
        return default_operator(spec.id, cfg.d, spec.r)
    try:
        return kernel_from_spec(src)
    except MwlabError as exc:
        raise ConfigError(f"bad operator spec: {exc}") from exc


# --- running ------------------------------------------------------------------

def weight_constants(W, p, n_dirs=None):
    """The weight constants printed by ``constants`` and stored per weight."""
    out = {"A_p": float(matrix_ap(W, p)), "A_1": float(matrix_a1(W)),
           "Ainf_sc_p": float(ainfty_sc(W, p, n_dirs=n_dirs))}
    if p == 2.0:
        out["A_2"] = out["A_p"]
    return out


def run_certificate(spec, W, cfg, C=None):
    """One theorem entry on one weight; returns a JSON-able dict."""
    from . import verify as V

    C = C or V.WeightConstants(W, cfg.n_dirs)
    kw = {"trials": cfg.trials, "seed": cfg.seed, "multiplier": cfg.pass_multiplier}
    tid = spec.id
    if tid in ("rough-ap", "horm-ap", "a1", "aq"):
        T = _operator(spec, cfg)
        return V.verify_strong(C, spec.p, T, tid, r=spec.r, q=spec.q, **kw).to_json()
    if tid.startswith("cf-"):
        T = _operator(spec, cfg)
        return V.verify_cf(C, spec.p, T, tid[3:], r=spec.r, **kw).to_json()
    if tid.startswith("endpoint-"):
        T = _operator(spec, cfg)
        return V.verify_endpoint(C, T, tid[9:], r=spec.r, **kw).to_json()
    if tid == "cpq":
        q = spec.q or 2 * spec.p
        gamma = spec.gamma or V.exponents_from_constants("cf", spec.p, W.geometry.d,
                                                         C.ainfty(spec.p)).exponents["r"]
        rep = V.cpq_check(W, spec.p, q, gamma)
        out = rep.to_json()
        out.update(theorem="cpq", status="pass" if rep.holds else "fail", p=spec.p, q=q)
        return out
    if tid == "apfromrh":
        q = spec.q or spec.p
        r = spec.r or 1.01
        s = spec.gamma or 1.01
        rows = [V.apfromrh_check(W, q, r, s, cube).to_json()
                for cube in W.geometry.cubes(min(2, W.geometry.L))]
        bad = [x for x in rows if x["status"] == "violated"]
        return {"theorem": "apfromrh", "cubes": rows, "status": "fail" if bad else "pass"}
    if tid == "keyap":
        return keyap_experiment(W, spec.p, cfg.seed)
    raise ConfigError(f"unknown theorem id {tid!r}")


def keyap_experiment(W, p, seed=0, r=1.0, s=1.5):
    """Sparse-sum lemma on a local family built from random h, g with
    U_Q, V_Q the direct and dual reducing matrices."""
    from .sparse import build_local_sparse
    from .verify import keyap_check

    geo = W.geometry
    rng = np.random.default_rng([seed, 7])
    h = rng.standard_normal(geo.shape + (W.n,))
    g = rng.standard_normal(geo.shape + (W.n,))
    T = default_operator("rough-ap", geo.d)
    hw = np.einsum("...ij,...j->...i", W.power(-1.0 / p), h)
    gw = np.einsum("...ij,...j->...i", W.power(1.0 / p), g)
    fam, _ = build_local_sparse(T, GridFunction(geo, hw), GridFunction(geo, gw), geo.root(),
                                r, s, seed=seed)
    U = {c: reducing_matrix(W, p, c, "direct").matrix for c in geo.all_cubes()}
    Vm = {c: reducing_matrix(W, p, c, "dual").matrix for c in geo.all_cubes()}
    rep = keyap_check(W, p, r, s, fam.cubes, float(fam.eta_claimed), h, g, U, Vm, seed=seed)
    out = rep.to_json()
    out.update(theorem="keyap", family_size=len(fam), status="pass" if rep.holds else "fail")
    return out


def _weights(cfg):
    geo = cfg.geometry
    if cfg.weights == "corpus":
        return weight_corpus(geo, cfg.n, cfg.seed)
    specs = cfg.weights if cfg.weights is not None else [cfg.weight]
    out = []
    for w in specs:
        if "path" in w and not os.path.isabs(w["path"]):
            w = dict(w, path=os.path.join(cfg.base_dir, w["path"]))
        try:
            W = weight_from_json(w, geo, cfg.n)
        except (MwlabError, OSError, KeyError) as exc:
            raise ConfigError(f"bad weight spec {w!r}: {exc}") from exc
        if W.geometry != geo:
            raise ConfigError("weight file geometry differs from the config geometry")
        out.append(W)
    return out


def run_sparse(spec, trace_sink=None):
    """Sparse corpus block: build, certify and bracket every instance."""
    from .sparse import build_global_sparse, domination_ratio, sparse_certify

    size = int(spec.get("size", 10))
    seed = int(spec.get("seed", 0))
    refine = int(spec.get("refine", 0))
    rows, refinement = [], []
    for inst in sparse_corpus(seed, size):
        base_L = int(spec.get("L1" if inst.d == 1 else "L2", inst.default_L()))
        ratios = []
        for dl in range(refine + 1):
            L = base_L + dl
            geo, f, g = inst.functions(L)
            T = inst.operator()
            r, s = inst.exponents
            res = build_global_sparse(T, f, g, r, s, seed=seed)
            cert = sparse_certify(res.family, res.family.eta_claimed, with_assignment=False)
            dom = domination_ratio(T, f, g, res.family, r, s, engine=res.engine)
            ratios.append(dom.ratio_upper)
            if dl == 0:
                checks_ok = all(all(rec.checks.values()) for rec in res.trace)
                rows.append({"instance": inst.to_json(), "L": L, "family_size": len(res.family),
                             "iterations": len(res.trace), "flow_feasible": cert.flow_feasible,
                             "carleson": cert.carleson, "checks_ok": checks_ok,
                             "domination": dom.to_json()})
                if trace_sink is not None:
                    for rec in res.trace:
                        trace_sink.append({"instance": inst.index, **rec.to_json()})
        refinement.append({"instance": inst.index, "ratios": ratios})
    C = [max((x["ratios"][k] for x in refinement if len(x["ratios"]) > k), default=0.0)
         for k in range(refine + 1)]
    return {"instances": rows, "refinement": refinement, "C": C,
            "all_feasible": all(x["flow_feasible"] for x in rows),
            "all_checks_ok": all(x["checks_ok"] for x in rows)}


def run_lemmas(spec):
    from .lemmas import GridSpec, bownik_sweep, holder_mccarthy_sweep, param_lemma_checks
    from .lemmas import rh_check_weight

    spec = spec or {}
    grid = GridSpec(**spec.get("grid", {}))
    pairs = int(spec.get("pairs", 10_000))
    seed = int(spec.get("seed", 0))
    out = {"param": param_lemma_checks(grid).to_json(),
           "bownik": bownik_sweep(pairs, seed).to_json(),
           "holder_mccarthy": holder_mccarthy_sweep(pairs, seed).to_json()}
    rh = []
    for d, L in spec.get("rh_geometries", [[1, 8], [2, 5]]):
        for W in weight_corpus(GridGeometry(d, L), 2, seed):
            rh.append(rh_check_weight(W).to_json())
    out["reverse_holder"] = rh
    out["passed"] = (out["param"]["passed"] and out["bownik"]["passed"]
                     and out["holder_mccarthy"]["passed"] and all(x["passed"] for x in rh))
    return out


def run_experiment(cfg, trace_sink=None):
    """Everything configured; returns the report dict."""
    weights = _weights(cfg)
    report = {"config": cfg.to_json(), "weights": [], "certificates": []}
    for W in weights:
        from .verify import WeightConstants

        entry = {"weight": W.metadata(), "constants": weight_constants(W, cfg.p, cfg.n_dirs)}
        report["weights"].append(entry)
        C = WeightConstants(W, cfg.n_dirs)
        for spec in cfg.theorems:
            rec = run_certificate(spec, W, cfg, C)
            rec["weight"] = W.metadata()
            rec["theorem_id"] = spec.id
            report["certificates"].append(rec)
            if trace_sink is not None:
                trace_sink.append({"event": "certificate", "theorem": spec.id,
                                   "weight": W.kind, "status": rec["status"]})
    if cfg.sparse is not None:
        report["sparse"] = run_sparse(cfg.sparse, trace_sink)
    if cfg.lemmas is not None:
        report["lemmas"] = run_lemmas(cfg.lemmas)
    report["status"] = overall_status(report)
    return report


def overall_status(report):
    st = [c["status"] for c in report.get("certificates", [])]
    failed = "fail" in st
    if "sparse" in report:
        sp = report["sparse"]
        failed |= not (sp["all_feasible"] and sp["all_checks_ok"])
    if "lemmas" in report:
        failed |= not report["lemmas"]["passed"]
    if failed:
        return "fail"
    if "inconclusive" in st:
        return "inconclusive"
    return "pass"


def exit_code(status):
    return {"pass": EXIT_PASS, "fail": EXIT_FAIL, "inconclusive": EXIT_INCONCLUSIVE}[status]


# --- serialization ------------------------------------------------------------

def _clean(obj):
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_json"):
        return _clean(obj.to_json())
    return str(obj)


def dumps_report(report):
    return json.dumps(_clean(report), sort_keys=True, indent=1) + "\n"


SUMMARY_FIELDS = ("theorem", "weight_kind", "weight_seed", "constants", "exponents", "ratio",
                  "pass_bound", "status")


def _kv(d):
    return ";".join(f"{k}={_clean(v)}" for k, v in sorted((d or {}).items())
                    if not isinstance(v, (dict, list)))


def summary_rows(report):
    rows = []
    for c in report.get("certificates", []):
        rows.append({"theorem": c.get("theorem_id", c.get("theorem")),
                     "weight_kind": c["weight"]["kind"], "weight_seed": c["weight"]["seed"],
                     "constants": _kv(c.get("constants")), "exponents": _kv(c.get("exponents")),
                     "ratio": _clean(c.get("ratio", c.get("worst_ratio", ""))),
                     "pass_bound": _clean(c.get("pass_bound", c.get("bound", ""))),
                     "status": c["status"]})
    for w in report.get("weights", []):
        rows.append({"theorem": "constants", "weight_kind": w["weight"]["kind"],
                     "weight_seed": w["weight"]["seed"], "constants": _kv(w["constants"]),
                     "exponents": "", "ratio": "", "pass_bound": "", "status": "computed"})
    return rows


def _csv(rows, fields):
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    wr.writeheader()
    for r in rows:
        wr.writerow({k: r.get(k, "") for k in fields})
    return buf.getvalue()


def plot_tables(report):
    """name -> (fields, rows) for plotdata/*.csv."""
    out = {}
    certs = report.get("certificates", [])
    if certs:
        rows = [{"theorem": c.get("theorem_id"), "weight": c["weight"]["kind"],
                 "ratio": _clean(c.get("ratio")), "calibration": _clean(c.get("calibration")),
                 "pass_bound": _clean(c.get("pass_bound")), "status": c["status"]}
                for c in certs if "ratio" in c]
        out["certificates"] = (("theorem", "weight", "ratio", "calibration", "pass_bound",
                                "status"), rows)
    sweep = []
    for c in certs:
        ex = c.get("extras", {})
        if "level_sets" in ex:
            for trial, vals in sorted(ex["level_sets"].items(), key=lambda kv: int(kv[0])):
                for lam, v in zip(ex["lambdas"], vals):
                    sweep.append({"theorem": c["theorem_id"], "weight": c["weight"]["kind"],
                                  "trial": trial, "lambda": lam, "value": v})
    if sweep:
        out["lambda_sweep"] = (("theorem", "weight", "trial", "lambda", "value"), sweep)
    sp = report.get("sparse")
    if sp:
        out["sparse_domination"] = (
            ("instance", "d", "n", "kind", "L", "family_size", "ratio_lower", "ratio_upper"),
            [{"instance": x["instance"]["index"], "d": x["instance"]["d"],
              "n": x["instance"]["n"], "kind": x["instance"]["kind"], "L": x["L"],
              "family_size": x["family_size"],
              "ratio_lower": _clean(x["domination"]["ratio_lower"]),
              "ratio_upper": _clean(x["domination"]["ratio_upper"])} for x in sp["instances"]])
        out["refinement"] = (("instance", "dL", "ratio_upper"),
                             [{"instance": x["instance"], "dL": k, "ratio_upper": _clean(v)}
                              for x in sp["refinement"] for k, v in enumerate(x["ratios"])])
    return out


def write_outputs(report, out_dir, trace=None, figures=True):
    os.makedirs(os.path.join(out_dir, "plotdata"), exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(dumps_report(report))
    with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
        fh.write(_csv(summary_rows(report), SUMMARY_FIELDS))
    with open(os.path.join(out_dir, "trace.jsonl"), "w") as fh:
        for line in trace or []:
            fh.write(json.dumps(_clean(line), sort_keys=True) + "\n")
    tables = plot_tables(report)
    for name, (fields, rows) in tables.items():
        with open(os.path.join(out_dir, "plotdata", f"{name}.csv"), "w") as fh:
            fh.write(_csv(rows, fields))
    if figures:
        from .plotting import render_figures

        render_figures(tables, os.path.join(out_dir, "figures"))


def merge_reports(paths):
    """Concatenate certificates and keep the other sections per source."""
    merged = {"sources": [], "certificates": [], "weights": []}
    for path in paths:
        with open(path) as fh:
            rep = json.load(fh)
        merged["sources"].append({"path": os.path.basename(os.path.dirname(os.path.abspath(path))),
                                  "status": rep.get("status")})
        merged["certificates"].extend(rep.get("certificates", []))
        merged["weights"].extend(rep.get("weights", []))
        for key in ("sparse", "lemmas"):
            if key in rep:
                merged.setdefault(key, rep[key])
    merged["status"] = overall_status(merged)
    return merged


__all__ = ["ExperimentConfig", "TheoremSpec", "parse_config", "load_config", "run_experiment",
           "run_certificate", "run_sparse", "run_lemmas", "weight_constants", "write_outputs",
           "dumps_report", "merge_reports", "exit_code", "overall_status", "default_operator",
           "keyap_experiment", "CERTIFICATE_IDS", "THEOREM_IDS", "EXIT_PASS", "EXIT_FAIL",
           "EXIT_CONFIG", "EXIT_INCONCLUSIVE", "InvalidInputError", "DyadicCube"]
