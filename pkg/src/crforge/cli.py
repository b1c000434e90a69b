"""Command-line interface: ``crforge <command> --input FILE [flags]``."""

from __future__ import annotations

import argparse
import os
import sys
import time
from importlib import resources
from typing import Callable, Dict, List, Optional

from . import plotting
from . import reflection as rf
from .manifest import Manifest, ManifestError, parse_manifest
from .powerseries import Series
from .manifolds import (SegreTower, finite_type_check, holo_nondegeneracy_check, segre_identity_residuals,
                        segre_mapping)
from .report import EXIT_USAGE, Report, emit_report

COMMANDS = ("check-generic", "normal-form", "segre", "iterate-segre", "finite-type", "holo-nondeg", "check-map",
            "reflection-ideal", "ideal-equal", "rank", "not-totally-degenerate", "finite-map", "build-system",
            "check-jet-solution", "key-identity", "determine", "selftest")


class UsageError(ValueError):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crforge", description="Formal CR-geometry checks at a truncation order.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--input", help="manifest file")
    p.add_argument("--order", type=int, help="truncation order (at most the manifest order)")
    p.add_argument("--manifold", help="manifold name (default: first declared)")
    p.add_argument("--target", help="target manifold name")
    p.add_argument("--map", dest="map_name", help="map name")
    p.add_argument("--map2", help="second map name")
    p.add_argument("--level", type=int, default=1, help="jet level l")
    p.add_argument("--segre-level", type=int, default=0, help="Segre level j")
    p.add_argument("--epsilon-bound", type=int, default=0, help="derivative bound for theta systems")
    p.add_argument("--kind", choices=("phi", "psi", "theta"), default="psi", help="constraint system")
    p.add_argument("--tilde", action="store_true", help="use the w' - Q' generators")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--agreement-order", type=int, default=2, help="order K of agreement with H0")
    p.add_argument("--perturbation-degree", type=int, help="perturbation degrees K+1..K+this")
    p.add_argument("--seed", type=int, help="random seed (default: $CRFORGE_SEED or 0)")
    p.add_argument("--format", choices=("human", "json-lines"), default="human")
    p.add_argument("--timing", action="store_true", help="record wall-clock milliseconds per check")
    p.add_argument("--plot-dir", help="write figures to this directory")
    return p


def resolve_seed(value: Optional[int]) -> int:
    if value is not None:
        return value
    env = os.environ.get("CRFORGE_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"CRFORGE_SEED must be an integer, got {env!r}") from None


# ---------------------------------------------------------------------------
# helpers

class Session:
    """A parsed manifest plus the resolved flags of one command."""

    def __init__(self, manifest: Manifest, args: argparse.Namespace, report: Report):
        self.manifest = manifest
        self.args = args
        self.report = report
        k = manifest.order if args.order is None else args.order
        if k > manifest.order:
            raise UsageError(f"requested order {k} exceeds the manifest order {manifest.order}")
        if k < 1:
            raise UsageError("order must be at least 1")
        self.order = k

    def manifold_name(self, flag: Optional[str] = None) -> str:
        name = flag if flag is not None else self.args.manifold
        if name is None:
            names = [d.name for d in self.manifest.decls if type(d).__name__ == "ManifoldDecl"]
            if not names:
                raise UsageError("the manifest declares no manifold")
            name = names[0]
        return name

    def manifold(self, name: Optional[str] = None):
        return self.manifest.manifold(self.manifold_name(name), self.order)

    def map_name(self, flag: str = "map_name") -> str:
        name = getattr(self.args, flag)
        if name is None:
            raise UsageError(f"--{'map' if flag == 'map_name' else flag} is required")
        return name

    def map(self, flag: str = "map_name"):
        name = self.map_name(flag)
        H = self.manifest.map(name, self.order)
        src, tgt = self.manifest.map_ends[name]
        return name, H, self.manifest.manifold(src, self.order), self.manifest.manifold(tgt, self.order)

    def timed(self, fn: Callable):
        t = time.perf_counter()
        value = fn()
        millis = (time.perf_counter() - t) * 1000 if self.args.timing else None
        return value, millis

    def figure(self, name: str) -> Optional[str]:
        if not self.args.plot_dir:
            return None
        path = os.path.join(self.args.plot_dir, f"{self.args.command}-{name}.png")
        self.report.figures.append(path)
        return path


# ---------------------------------------------------------------------------
# commands

def cmd_check_generic(s: Session) -> None:
    names = [s.args.manifold] if s.args.manifold else [d.name for d in s.manifest.decls
                                                       if type(d).__name__ == "ManifoldDecl"]
    for name in names:
        inputs = {"manifold": name, "order": s.order}
        if name in s.manifest.errors:
            err = s.manifest.errors[name]
            s.report.add("generic", inputs, "not_generic", s.order, {"reason": err.message, "line": err.line}, False)
            continue
        M, ms = s.timed(lambda: s.manifold(name))
        s.report.add("generic", inputs, "generic", M.order,
                     {"N": M.N, "codimension": M.d, "CR_dimension": M.n, "w_coordinates": [j + 1 for j in M.w_idx],
                      "z_coordinates": [j + 1 for j in M.z_idx]}, True, ms)


def cmd_normal_form(s: Session) -> None:
    M = s.manifold()
    defect, ms = s.timed(M.reality_identity_defect)
    cert = {"Q": list(M.Q), "Qbar": list(M.Qbar), "variables_Q": "(z, zeta)", "variables_Qbar": "(chi, Z)"}
    if defect is not None:
        cert["reality_identity_defect_degree"] = defect
    s.report.add("normal_form", {"manifold": M.name, "order": s.order},
                 "reality_identity_holds" if defect is None else "reality_identity_fails", M.order, cert,
                 defect is None, ms)
    path = s.figure(M.name)
    if path:
        plotting.degree_profile(list(M.Q), [f"Q{j + 1}" for j in range(M.d)], f"{M.name}: normal form Q", path)


def cmd_segre(s: Session) -> None:
    M = s.manifold()
    S = segre_mapping(M)
    res, ms = s.timed(lambda: segre_identity_residuals(S))
    bad = [r.valuation() for r in res if not r.is_zero()]
    s.report.add("segre_mapping", {"manifold": M.name, "order": s.order},
                 "identity_holds" if not bad else "identity_fails", min(r.order for r in res),
                 {"gamma": S.gamma, "gamma_bar": S.gamma_bar(), "variables": "(zeta, t)",
                  **({"first_failure_degree": min(bad)} if bad else {})}, not bad, ms)


def cmd_iterate_segre(s: Session) -> None:
    M = s.manifold()
    j = max(s.args.segre_level, 1)
    tower = SegreTower(segre_mapping(M))
    inputs = {"manifold": M.name, "order": s.order, "segre_level": j}

    def iteration():
        out = {}
        for i in range(j):
            res = tower.identity_residuals(i)
            out[i] = min((r.valuation() for r in res if not r.is_zero()), default=None)
        return out

    vals, ms = s.timed(iteration)
    bad = {i: v for i, v in vals.items() if v is not None}
    s.report.add("segre_iteration", inputs, "identity_holds" if not bad else "identity_fails",
                 tower.v(j).order, {"levels_checked": list(range(j)), "v": tower.v(j),
                                    **({"failures": bad} if bad else {})}, not bad, ms)

    def retraction():
        out = {}
        for i in range(max(j - 1, 1)):
            res = tower.retraction_residual(i)
            out[i] = min((r.valuation() for r in res if not r.is_zero()), default=None)
        return out

    vals, ms = s.timed(retraction)
    bad = {i: v for i, v in vals.items() if v is not None}
    cert = {"levels_checked": sorted(vals), "default_gamma": tower.segre.default}
    if tower.segre.default:
        cert["xi_is_t_block"] = all(_xi_is_block(tower, i) for i in vals)
    s.report.add("retraction", inputs, "identity_holds" if not bad else "identity_fails", M.order,
                 {**cert, **({"failures": bad} if bad else {})}, not bad, ms)


def _xi_is_block(tower: SegreTower, i: int) -> bool:
    n = tower.manifold.n
    nv, k = n * (i + 1), tower.manifold.order
    xi = tower.xi(i)
    if i == 0:
        return all(c.is_zero() for c in xi)
    return all(c.agrees_with(Series.variable(p, nv, k)) for c, p in zip(xi, tower.t_block(i)))


def cmd_finite_type(s: Session) -> None:
    M = s.manifold()
    res, ms = s.timed(lambda: finite_type_check(M))
    outcome = {"finite_type": True, "not_finite_type_to_order": False}.get(res.verdict)
    cert = {"j0": res.segre.get("j0") if res.segre else None, "segre_ranks": res.segre["ranks"] if res.segre else None,
            "lie_span_dimension": res.lie["dimension"] if res.lie else None,
            "lie_target_dimension": res.lie["target"] if res.lie else None,
            "lie_depth": res.lie["depth"] if res.lie else None, "routes_agree": res.agree}
    s.report.add("finite_type", {"manifold": M.name, "order": s.order}, res.verdict, res.order, cert, outcome, ms)
    path = s.figure(M.name)
    if path and res.segre:
        plotting.segre_ranks(res.segre["ranks"], M.N, f"{M.name}: Segre ranks", path)


def cmd_holo_nondeg(s: Session) -> None:
    name = s.args.target or s.manifold_name()
    M = s.manifold(name)
    res, ms = s.timed(lambda: holo_nondegeneracy_check(M))
    outcome = {"nondegenerate": True, "degenerate_to_order": False}.get(res.verdict)
    cert: dict = {"notes": res.notes}
    if res.indices:
        cert["indices"] = [{"alpha": list(a), "j": j + 1} for a, j in res.indices]
        cert["determinant"] = res.determinant
    if res.vector_field:
        cert["tangent_vector_field"] = res.vector_field
    s.report.add("holo_nondegenerate", {"manifold": name, "order": s.order}, res.verdict, res.order, cert, outcome,
                 ms)
    if s.args.map_name:
        mname, H, _, tgt = s.map()
        v, ms = s.timed(lambda: rf.nondegeneracy_certificate(tgt, H, seed=s.report.seed))
        s.report.add_verdict(v, {"map": mname, "target": tgt.name, "order": s.order}, ms)


def cmd_check_map(s: Session) -> None:
    name, H, M, Mp = s.map()
    v, ms = s.timed(lambda: rf.sends_into(M, Mp, H))
    s.report.add_verdict(v, {"map": name, "source": M.name, "target": Mp.name, "order": s.order}, ms)


def cmd_reflection_ideal(s: Session) -> None:
    name, H, M, Mp = s.map()
    ideal, ms = s.timed(lambda: rf.reflection_generators(Mp, H, name))
    s.report.add("reflection_ideal", {"map": name, "target": Mp.name, "order": s.order}, "computed", ideal.order,
                 {"generators": ideal.generators, "variables": "(Z, zeta')", "generator_count": len(ideal.generators),
                  "polynomial_data": ideal.polynomial_data}, True, ms)
    path = s.figure(name)
    if path:
        plotting.degree_profile(list(ideal.generators), [f"generator {j + 1}" for j in range(len(ideal.generators))],
                                f"reflection ideal of {name}", path)


def cmd_ideal_equal(s: Session) -> None:
    n1, H1, _, Mp1 = s.map()
    n2, H2, _, Mp2 = s.map("map2")
    if Mp1.name != Mp2.name:
        raise UsageError(f"maps {n1} and {n2} have different targets")
    inputs = {"map": n1, "map2": n2, "target": Mp1.name, "order": s.order}
    v, ms = s.timed(lambda: rf.ideal_equal(Mp1, H1, H2))
    s.report.add_verdict(v, inputs, ms)
    v2, ms = s.timed(lambda: rf.ideal_equal_by_membership(Mp1, H1, H2))
    s.report.add_verdict(v2, inputs, ms)


def cmd_rank(s: Session) -> None:
    name, H, _, _ = s.map()
    v, ms = s.timed(lambda: rf.map_rank(H, seed=s.report.seed))
    s.report.add_verdict(v, {"map": name, "order": s.order}, ms)


def cmd_not_totally_degenerate(s: Session) -> None:
    name, H, M, Mp = s.map()
    v, ms = s.timed(lambda: rf.not_totally_degenerate(M, Mp, H, seed=s.report.seed))
    s.report.add_verdict(v, {"map": name, "source": M.name, "target": Mp.name, "order": s.order}, ms)


def cmd_finite_map(s: Session) -> None:
    name, H, _, _ = s.map()
    v, ms = s.timed(lambda: rf.finite_map_check(H, s.order))
    s.report.add_verdict(v, {"map": name, "order": s.order}, ms)
    path = s.figure(name)
    if path and v.holds:
        plotting.standard_monomials(v.certificate["standard_monomials"], s.order, f"{name}: standard monomials", path)


def _system_inputs(s: Session, name: str) -> dict:
    a = s.args
    return {"map": name, "kind": a.kind, "tilde": a.tilde, "level": a.level, "segre_level": a.segre_level,
            "epsilon_bound": a.epsilon_bound, "order": s.order}


def _build(s: Session, H, M, Mp):
    a = s.args
    return rf.build_system(M, Mp, H, a.kind, a.level, a.segre_level, a.epsilon_bound, a.tilde)


def cmd_build_system(s: Session) -> None:
    name, H, M, Mp = s.map()
    system, ms = s.timed(lambda: _build(s, H, M, Mp))
    agree = system.routes_agree()
    cert = {"entries": len(system.entries), "components_per_entry": Mp.d, "parameters": system.nparams,
            "tables": {k: len(v) for k, v in system.tables.items()},
            "max_hat_degree": max((p.hat_degree() for comps in system.entries.values() for p in comps), default=0),
            "routes": agree.certificate}
    s.report.add(f"{system.kind}_system", _system_inputs(s, name),
                 "built_routes_agree" if agree.holds else "built_routes_differ", system.order, cert, agree.holds, ms)


def cmd_check_jet_solution(s: Session) -> None:
    name, H, M, Mp = s.map()
    sname = s.args.map2 or name
    S_map = s.manifest.map(sname, s.order)
    if len(S_map) != len(H) or S_map.nvars != H.nvars:
        raise UsageError(f"map {sname} does not have the dimensions of {name}")
    system = _build(s, H, M, Mp)
    v, ms = s.timed(lambda: rf.check_jet_solution(system, M, S_map))
    s.report.add_verdict(v, {**_system_inputs(s, name), "jet_of": sname}, ms)


def cmd_key_identity(s: Session) -> None:
    name, H, M, Mp = s.map()
    n0, H0, _, Mp0 = s.map("map2")
    if Mp0.name != Mp.name:
        raise UsageError(f"maps {name} and {n0} have different targets")
    l, j = s.args.level, s.args.segre_level
    tower = SegreTower(segre_mapping(M))

    def run():
        S = rf.map_jet_along(H0, l, tower.v(j + 1))
        return rf.key_identity_check(M, Mp, H, S, l, j, H0=H0)

    v, ms = s.timed(run)
    s.report.add_verdict(v, {"map": name, "map2": n0, "level": l, "segre_level": j, "order": s.order}, ms)


def cmd_determine(s: Session) -> None:
    name, H0, M, Mp = s.map()
    a = s.args
    rep, ms = s.timed(lambda: rf.determination_experiment(M, Mp, H0, K=a.agreement_order, trials=a.trials,
                                                         perturbation_degree=a.perturbation_degree,
                                                         seed=s.report.seed))
    d = rep.to_dict()
    outcome = {"pass": True, "fail": False, "vacuous": True}[d["verdict"]]
    s.report.add("determination", {"map": name, "source": M.name, "target": Mp.name, "order": s.order,
                                   "K": a.agreement_order, "trials": a.trials},
                 d["verdict"], rep.order, d, outcome, ms)
    path = s.figure(name)
    if path:
        plotting.determination(rep.agreement_orders, rep.conclusion_orders, rep.margin, rep.order,
                               f"survivors around {name}", path)


# ---------------------------------------------------------------------------
# selftest

SELFTEST = {
    "quadric": [
        ("finite-type", {"manifold": "Q"}, {"finite_type": "finite_type"}),
        ("holo-nondeg", {"manifold": "Q", "map_name": "Id"},
         {"holo_nondegenerate": "nondegenerate", "nondegeneracy_certificate": "certified"}),
        ("check-map", {"map_name": "A"}, {"sends_into": "holds_mod_order"}),
        ("ideal-equal", {"map_name": "A", "map2": "Id"},
         {"ideal_equal": "different", "ideal_equal_membership": "different"}),
        ("not-totally-degenerate", {"map_name": "Id"}, {"not_totally_degenerate": "certified"}),
        ("finite-map", {"map_name": "A"}, {"finite_map": "finite"}),
        ("check-jet-solution", {"map_name": "A", "kind": "phi", "level": 2}, {"phi_solution": "solution"}),
        ("key-identity", {"map_name": "A", "map2": "A", "level": 1}, {"key_identity": "holds"}),
        ("determine", {"map_name": "Id", "trials": 20}, {"determination": "pass"}),
    ],
    "product_model": [
        ("finite-type", {"manifold": "M"}, {"finite_type": "finite_type"}),
        ("check-map", {"map_name": "H"}, {"sends_into": "holds_mod_order"}),
        ("ideal-equal", {"map_name": "H", "map2": "Id"}, {"ideal_equal": "equal", "ideal_equal_membership": "equal"}),
        ("rank", {"map_name": "H"}, {"rank": "rank"}),
        ("check-jet-solution", {"map_name": "H", "kind": "psi", "level": 1}, {"psi_solution": "solution"}),
        ("key-identity", {"map_name": "H", "map2": "Id", "level": 1}, {"key_identity": "holds"}),
    ],
    "blowup": [
        ("check-map", {"map_name": "H"}, {"sends_into": "holds_mod_order"}),
        ("finite-type", {"manifold": "M"}, {"finite_type": "finite_type"}),
        ("holo-nondeg", {"manifold": "Mp", "map_name": "H"},
         {"holo_nondegenerate": "nondegenerate", "nondegeneracy_certificate": "certified"}),
        ("rank", {"map_name": "H"}, {"rank": "rank"}),
        ("not-totally-degenerate", {"map_name": "H"}, {"not_totally_degenerate": "certified"}),
        ("finite-map", {"map_name": "H"}, {"finite_map": "not_finite_up_to_order"}),
    ],
    "hyperplane": [
        ("finite-type", {"manifold": "P"}, {"finite_type": "not_finite_type_to_order"}),
        ("holo-nondeg", {"manifold": "P", "map_name": "Id"},
         {"holo_nondegenerate": "degenerate_to_order", "nondegeneracy_certificate": "none_found"}),
        ("check-map", {"map_name": "F"}, {"sends_into": "holds_mod_order"}),
        ("finite-map", {"map_name": "F"}, {"finite_map": "finite"}),
    ],
}
for _name in SELFTEST:
    SELFTEST[_name] = [("normal-form", {}, {"normal_form": "reality_identity_holds"}),
                       ("iterate-segre", {"segre_level": 3},
                        {"segre_iteration": "identity_holds", "retraction": "identity_holds"})] + SELFTEST[_name]


def fixture_text(name: str) -> str:
    return resources.files("crforge").joinpath("fixtures", f"{name}.crf").read_text(encoding="utf-8")


def fixture_names() -> List[str]:
    return sorted(p.name[:-4] for p in resources.files("crforge").joinpath("fixtures").iterdir()
                  if p.name.endswith(".crf"))


def default_args(command: str, **overrides) -> argparse.Namespace:
    args = build_parser().parse_args([command])
    for k, v in overrides.items():
        setattr(args, k, v)
    return args


def cmd_selftest(s: Session) -> None:
    for fixture, checks in SELFTEST.items():
        manifest = parse_manifest(fixture_text(fixture), strict=False)
        for command, flags, expected in checks:
            args = default_args(command, order=s.args.order, timing=s.args.timing, **flags)
            sub = Report(command, [], s.report.seed)
            t = time.perf_counter()
            try:
                run_command(manifest, command, args, sub)
                error = None
            except (ManifestError, UsageError, ValueError) as exc:
                error = str(exc)
            ms = (time.perf_counter() - t) * 1000 if s.args.timing else None
            got = {r.check: r.verdict for r in sub.records}
            orders = [r.certified_order for r in sub.records if r.certified_order is not None]
            ok = error is None and all(got.get(c) == v for c, v in expected.items())
            cert = {"expected": expected, "observed": got}
            if error:
                cert["error"] = error
            s.report.add(f"{fixture}:{command}", {"fixture": fixture, **{k: v for k, v in flags.items()}},
                         "expected" if ok else "unexpected", min(orders) if orders else None, cert, ok, ms)
    path = s.figure("checks")
    if path:
        plotting.check_timings([r.check for r in s.report.records], [r.millis or 0.0 for r in s.report.records],
                               [r.outcome for r in s.report.records], "selftest", path)


HANDLERS: Dict[str, Callable[[Session], None]] = {
    "check-generic": cmd_check_generic, "normal-form": cmd_normal_form, "segre": cmd_segre,
    "iterate-segre": cmd_iterate_segre, "finite-type": cmd_finite_type, "holo-nondeg": cmd_holo_nondeg,
    "check-map": cmd_check_map, "reflection-ideal": cmd_reflection_ideal, "ideal-equal": cmd_ideal_equal,
    "rank": cmd_rank, "not-totally-degenerate": cmd_not_totally_degenerate, "finite-map": cmd_finite_map,
    "build-system": cmd_build_system, "check-jet-solution": cmd_check_jet_solution,
    "key-identity": cmd_key_identity, "determine": cmd_determine, "selftest": cmd_selftest,
}


def run_command(manifest: Optional[Manifest], command: str, args: argparse.Namespace, report: Report) -> Report:
    if command not in HANDLERS:
        raise UsageError(f"unknown command {command!r}")
    if command == "selftest":
        if args.order is not None and args.order < 8:
            raise UsageError("selftest runs at order 8 or higher")
        holder = manifest or Manifest(10, [])
        HANDLERS[command](Session(holder, args, report))
        return report
    if manifest is None:
        raise UsageError("--input is required")
    HANDLERS[command](Session(manifest, args, report))
    return report


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        seed = resolve_seed(args.seed)
        report = Report(args.command, argv, seed)
        manifest = None
        if args.input:
            try:
                with open(args.input, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise UsageError(f"cannot read {args.input}: {exc.strerror}") from None
            manifest = parse_manifest(text, strict=False)
        run_command(manifest, args.command, args, report)
    except ManifestError as exc:
        where = f"{args.input}:{exc.line}:{exc.col}: " if exc.line else ""
        print(f"crforge: error: {where}{exc.message}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, ValueError) as exc:
        print(f"crforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sys.stdout.write(emit_report(report, args.format))
    return report.exit_code()


if __name__ == "__main__":
    sys.exit(main())
