"""Command-line front end: check, synth, scenario, plan, generate.

Exit codes: 0 when the specification holds (or the command simply ran),
1 when it is violated, 2 on any input or runtime error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..checker import check, check_spec, evaluate_fsc, evaluate_policy
from ..checker.lp import dual_lp_synthesize
from ..models.core import Model, ModelError
from ..models.dfa import dfa_from_dict
from ..models.io import (fsc_from_dict, fsc_to_dict, model_from_dict, model_to_dict, parse_spec,
                         policy_from_dict, policy_to_dict, serialize_model, spec_to_str)
from ..models.labels import BeliefLabeling, constant_sensor, grid_sensor
from ..optim.lp import LpError
from ..optim.scp import ScpConfig
from ..planner.bench import reach_avoid_instance
from ..planner.episode import VARIANTS, PlannerConfig, run_episode, summarize, summary_csv
from ..synth.parametric import ParametricModel, is_parametric_json, parametric_from_dict
from ..synth.robust_fsc import memoryless_scp_synthesis, robust_fsc_synthesis
from ..synth.scenario import ScenarioConfig, scenario_verify
from ..synth.scp_param import certify_instantiation, scp_param_synthesis
from .bench import generate_benchmark

EXIT_OK, EXIT_VIOLATED, EXIT_ERROR = 0, 1, 2
_TIMING_KEYS = {"wall_time", "time"}


class CliError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    model: str | None = None
    spec: str | None = None
    out: str | None = None
    seed: int = 0
    json: bool = False
    params: dict = field(default_factory=dict)

    def validate(self):
        if self.model is not None and not Path(self.model).is_file():
            raise CliError(f"model file {self.model!r} does not exist")
        for key in ("policy", "fsc"):
            p = self.params.get(key)
            if p is not None and not Path(p).is_file():
                raise CliError(f"{key} file {p!r} does not exist")
        if self.seed < 0:
            raise CliError("seed must be non-negative")
        for key in ("samples", "episodes", "k_memory", "size", "depth"):
            v = self.params.get(key)
            if v is not None and v < 1:
                raise CliError(f"--{key.replace('_', '-')} must be at least 1")


# ---- helpers

def _clean(o):
    """JSON-ready copy without timing fields, so reruns are byte-identical."""
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items() if k not in _TIMING_KEYS}
    if isinstance(o, (list, tuple, set, frozenset)):
        seq = sorted(o) if isinstance(o, (set, frozenset)) else o
        return [_clean(v) for v in seq]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return None if math.isinf(v) or math.isnan(v) else v
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def _dumps(d) -> str:
    return json.dumps(_clean(d), indent=1, sort_keys=True) + "\n"


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})") from None


def load_model(path: str):
    d = _read_json(path)
    if not isinstance(d, dict):
        raise CliError(f"{path}: expected a JSON object")
    return parametric_from_dict(d) if is_parametric_json(d) else model_from_dict(d)


def _spec_for(model, text: str | None):
    if not text:
        raise CliError("--spec is required")
    if isinstance(model, ParametricModel):
        # labels and names resolve on any graph-preserving instantiation
        return parse_spec(text, model.instantiate(model.midpoint))
    return parse_spec(text, model)


def _table(rows) -> str:
    w = max(len(k) for k, _ in rows)
    return "".join(f"{k:<{w}}  {v}\n" for k, v in rows)


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _write(out: str | None, name: str, text: str) -> str | None:
    if out is None:
        return None
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    p = d / name
    p.write_text(text)
    return str(p)


def _emit(args, payload: dict, rows):
    sys.stdout.write(_dumps(payload) if args.json else _table(rows))


def _scp_config(args) -> ScpConfig:
    kw = {k: getattr(args, k) for k in ("delta0", "gamma", "omega", "tau", "eps_graph")
          if getattr(args, k, None) is not None}
    if getattr(args, "max_iters", None) is not None:
        kw["max_iters"] = args.max_iters
    return ScpConfig(seed=args.seed, **kw)


# ---- commands

def cmd_check(args) -> int:
    model = load_model(args.model)
    if isinstance(model, ParametricModel):
        raise CliError("check needs a concrete model; use 'scenario' or 'synth --mode param-scp'")
    spec = _spec_for(model, args.spec)
    if args.fsc:
        res = evaluate_fsc(model, fsc_from_dict(_read_json(args.fsc)), spec)
    elif args.policy:
        pol = policy_from_dict(_read_json(args.policy))
        res = check(model, spec, pol)
    else:
        res = check(model, spec, method=args.method)
    sat = spec.holds(res.init_value)
    payload = {"spec": spec_to_str(spec), "value": res.init_value, "satisfied": sat,
               "method": res.method, "iterations": res.iterations}
    if args.values:
        payload["values"] = res.values
    _write(args.out, "check.json", _dumps({**payload, "values": res.values}))
    _emit(args, payload, [("spec", payload["spec"]), ("value", _fmt(res.init_value)),
                          ("satisfied", _fmt(sat)), ("method", res.method)])
    return EXIT_OK if sat else EXIT_VIOLATED


def _synth_dual(model: Model, spec, args):
    if not isinstance(model, Model) or model.has_intervals or model.kind not in ("mc", "mdp"):
        raise CliError("mode 'dual' needs an MDP or MC with point probabilities")
    if spec.kind != "reach" or spec.direction != ">=":
        raise CliError("mode 'dual' synthesizes for 'reach >= beta' specifications")
    best = check_spec(model, spec).init_value
    if not spec.holds(best):
        return {"status": "violated", "value": best, "max_value": best}, None, {}
    res = dual_lp_synthesize(model, spec.targets, spec.threshold)
    pol = res["policy"]
    cert = evaluate_policy(model, pol, spec).init_value
    report = {"status": "satisfied" if spec.holds(cert) else "violated", "value": cert,
              "lp_objective": res["objective"], "max_value": best,
              "lp_iterations": res["iterations"]}
    return report, cert, {"policy.json": _dumps(policy_to_dict(pol))}


def _synth_param(model, spec, args):
    if not isinstance(model, ParametricModel):
        raise CliError("mode 'param-scp' needs a parametric model (type 'pmdp')")
    rep = scp_param_synthesis(model, spec, _scp_config(args))
    cert = certify_instantiation(model, spec, rep.instantiation).init_value
    files = {"instantiation.json": _dumps(rep.instantiation), "trace.csv": rep.trace_csv()}
    return rep.to_dict(), cert, files


def _synth_fsc(model, spec, args):
    if not isinstance(model, Model) or model.obs is None:
        raise CliError(f"mode {args.mode!r} needs a POMDP or uPOMDP with observations")
    cfg = _scp_config(args)
    if args.mode == "memoryless":
        rep = memoryless_scp_synthesis(model, spec, cfg)
    else:
        rep = robust_fsc_synthesis(model, args.k_memory, spec, cfg)
    cert = evaluate_fsc(model, rep.policy, spec).init_value
    files = {"fsc.json": _dumps(fsc_to_dict(rep.policy)), "trace.csv": rep.trace_csv()}
    return rep.to_dict(), cert, files


def cmd_synth(args) -> int:
    model = load_model(args.model)
    spec = _spec_for(model, args.spec)
    if spec.threshold is None:
        raise CliError("synthesis needs a threshold in the specification")
    run = {"dual": _synth_dual, "param-scp": _synth_param,
           "robust-fsc": _synth_fsc, "memoryless": _synth_fsc}[args.mode]
    report, cert, files = run(model, spec, args)
    sat = cert is not None and spec.holds(cert)
    report = {**report, "mode": args.mode, "spec": spec_to_str(spec), "recheck_value": cert,
              "satisfied": sat}
    for name, text in files.items():
        _write(args.out, name, text)
    _write(args.out, "report.json", _dumps(report))
    _emit(args, report, [("mode", args.mode), ("spec", report["spec"]),
                         ("status", report["status"]), ("value", _fmt(report["value"])),
                         ("recheck", _fmt(cert)), ("satisfied", _fmt(sat)),
                         ("artifacts", ", ".join(sorted(files)) if args.out else "-")])
    return EXIT_OK if sat else EXIT_VIOLATED


def cmd_scenario(args) -> int:
    raw = _read_json(args.model)
    model = parametric_from_dict(raw) if is_parametric_json(raw) else model_from_dict(raw)
    if isinstance(model, Model) and not model.has_intervals:
        raise CliError("scenario verification needs a parametric or interval model")
    spec = _spec_for(model, args.spec)
    dist = {k: tuple(v) for k, v in raw.get("distribution", {}).items()}
    cfg = ScenarioConfig(K=args.samples, distribution=dist, seed=args.seed, nu=args.nu,
                         alpha=args.alpha, eps_graph=args.eps_graph or 0.0)
    rep = scenario_verify(model, spec, cfg)
    values = rep.pop("values")
    rep.update({"spec": spec_to_str(spec), "seed": args.seed, "L": rep["viol_count"],
                "value_min": float(values.min()), "value_max": float(values.max())})
    _write(args.out, "scenario.json", _dumps(rep))
    rows = [("spec", rep["spec"]), ("K", rep["K"]), ("L (violations)", rep["L"]),
            ("satisfied samples", rep["sat_count"])]
    if "nu" in rep:
        rows += [("nu", _fmt(rep["nu"])), ("alpha", _fmt(rep["alpha"]))]
    if "nu_star" in rep:
        rows += [("alpha target", _fmt(rep["alpha_target"])), ("nu*", _fmt(rep["nu_star"]))]
    if "note" in rep:
        rows.append(("note", rep["note"]))
    _emit(args, rep, rows)
    return EXIT_OK


def _sensor_from_dict(d: dict):
    kind = d.get("type", "constant")
    if kind == "constant":
        return constant_sensor(float(d.get("true_pos", 0.9)), float(d.get("false_pos", 0.1)))
    if kind == "grid":
        r = d.get("radius")
        return grid_sensor([tuple(c) for c in d["coords"]], math.inf if r is None else float(r),
                           float(d.get("accuracy", 0.95)), float(d.get("decay", 0.1)))
    raise CliError(f"unknown sensor type {kind!r}")


def load_plan_instance(path: str):
    d = _read_json(path)
    try:
        mdp = model_from_dict(d["mdp"])
        dfa = dfa_from_dict(d["dfa"])
        truth = [frozenset(x) for x in d["truth"]]
        prior = BeliefLabeling(tuple(d["prior"]["props"]),
                               np.asarray(d["prior"]["probs"], dtype=float))
        sensor = _sensor_from_dict(d.get("sensor", {}))
    except KeyError as exc:
        raise CliError(f"{path}: missing field {exc.args[0]!r}") from None
    return mdp, dfa, truth, prior, sensor


def cmd_plan(args) -> int:
    variants = args.variant or list(VARIANTS)
    for v in variants:
        if v not in VARIANTS:
            raise CliError(f"unknown variant {v!r}; choose from {', '.join(VARIANTS)}")
    fixed = load_plan_instance(args.model) if args.model else None
    rows, lines = {}, []
    for v in variants:
        traces = []
        for i in range(args.episodes):
            if fixed is None:
                inst = reach_avoid_instance(args.size, args.density, seed=args.seed + i)
                mdp, dfa, truth, prior, sensor = (inst.mdp, inst.dfa, inst.truth, inst.prior,
                                                  inst.sensor)
            else:
                mdp, dfa, truth, prior, sensor = fixed
            cfg = PlannerConfig.variant(v, gamma_d=args.gamma_d, gamma_r=args.gamma_r,
                                        N=args.samples, C_a=args.depth, beta=args.beta,
                                        seed=args.seed + i, max_steps=args.max_steps)
            tr = run_episode(mdp, dfa, truth, sensor, prior, cfg)
            traces.append(tr)
            for r in tr.records:
                lines.append(json.dumps(_clean({"variant": v, "episode": i, **r}),
                                        sort_keys=True) + "\n")
        rows[v] = summarize(traces)
    csv_text = summary_csv(rows)
    _write(args.out, "summary.csv", csv_text)
    _write(args.out, "traces.jsonl", "".join(lines))
    if args.json:
        sys.stdout.write(_dumps({"summary": rows}))
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


def cmd_generate(args) -> int:
    model, spec = generate_benchmark(args.kind, args.size, args.seed)
    text = serialize_model(model)
    name = f"{args.kind}_{args.size}"
    path = _write(args.out, f"{name}.json", text)
    _write(args.out, f"{name}.spec", spec + "\n")
    if args.json or path is None:
        sys.stdout.write(_dumps({"model": model_to_dict(model), "spec": spec})
                         if args.json else text + "\n")
    else:
        sys.stdout.write(_table([("kind", args.kind), ("size", args.size),
                                 ("states", model.n), ("observations", len(model.observations())),
                                 ("model", path), ("spec", spec)]))
    return EXIT_OK


# ---- parser

def _pos_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="verisynth",
                                description="Verification and synthesis for (uncertain) "
                                            "MDPs and POMDPs.")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--json", action="store_true", help="JSON on stdout")
    common.add_argument("--out", help="output directory for artifacts")

    def with_model(sp, required=True):
        sp.add_argument("--model", required=required, help="model JSON file")
        sp.add_argument("--spec", required=required, help='e.g. "reach >= 0.85 {goal}"')

    c = sub.add_parser("check", parents=[common], help="model check a specification")
    with_model(c)
    c.add_argument("--policy", help="evaluate this policy JSON instead of optimizing")
    c.add_argument("--fsc", help="evaluate this FSC JSON on a (u)POMDP")
    c.add_argument("--method", choices=("vi", "pi", "lp"), default="vi")
    c.add_argument("--values", action="store_true", help="include per-state values")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("synth", parents=[common], help="synthesize a policy or FSC")
    with_model(s)
    s.add_argument("--mode", choices=("dual", "param-scp", "robust-fsc", "memoryless"),
                   required=True)
    s.add_argument("--k-memory", type=int, default=2)
    s.add_argument("--delta0", type=_pos_float)
    s.add_argument("--gamma", type=float)
    s.add_argument("--omega", type=_pos_float)
    s.add_argument("--tau", type=_pos_float)
    s.add_argument("--eps-graph", type=_pos_float)
    s.add_argument("--max-iters", type=int)
    s.set_defaults(func=cmd_synth)

    sc = sub.add_parser("scenario", parents=[common], help="sampling-based certificate")
    with_model(sc)
    sc.add_argument("--samples", type=int, default=1000, help="number of samples K")
    sc.add_argument("--nu", type=float)
    sc.add_argument("--alpha", type=float)
    sc.add_argument("--eps-graph", type=float)
    sc.set_defaults(func=cmd_scenario)

    pl = sub.add_parser("plan", parents=[common], help="perception-planning episodes")
    pl.add_argument("--model", help="plan instance JSON (mdp, dfa, truth, prior, sensor); "
                                    "random reach-avoid grids when omitted")
    pl.add_argument("--variant", action="append", help=f"one of {', '.join(VARIANTS)}; "
                                                       "repeatable, default all")
    pl.add_argument("--episodes", type=int, default=50)
    pl.add_argument("--gamma-d", type=float, default=0.25)
    pl.add_argument("--gamma-r", type=float, default=0.1)
    pl.add_argument("--beta", type=float, default=0.5)
    pl.add_argument("--depth", type=int, default=2, help="perception tree depth C_a")
    pl.add_argument("--samples", type=int, default=100, help="risk samples N")
    pl.add_argument("--max-steps", type=int, default=50)
    pl.add_argument("--size", type=int, default=8)
    pl.add_argument("--density", type=float, default=0.25)
    pl.set_defaults(func=cmd_plan)

    g = sub.add_parser("generate", parents=[common], help="write a benchmark model")
    g.add_argument("--kind", choices=("grid", "maze", "navigation"), required=True)
    g.add_argument("--size", type=int, required=True, help="size parameter c >= 1")
    g.set_defaults(func=cmd_generate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    params = {k: getattr(args, k, None) for k in ("policy", "fsc", "samples", "episodes",
                                                  "k_memory", "size", "depth")}
    try:
        RunConfig(args.command, getattr(args, "model", None), getattr(args, "spec", None),
                  args.out, args.seed, args.json, params).validate()
        return args.func(args)
    except (ValueError, KeyError, TypeError, OSError, ArithmeticError, LpError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"verisynth {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
