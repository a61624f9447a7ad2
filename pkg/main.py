#!/usr/bin/env python3
"""
opkit command line
JSON の問題ファイルを読み、各モジュールへ振り分けて証明書・レポートを出力する

    opkit decompose|solve|koszul|certify|gjms|verify [flags] FILE
"""
import argparse
import csv
import json
import logging
import sys
import traceback

from config import settings, update_settings
from errors import InputError, MathematicalFailure, OpkitError
from fields import get_field
from gjms import (
    SpectralModel,
    gjms_coefficients,
    gjms_eigenstructure,
    gjms_nullspace,
    gjms_operator,
    gjms_solve,
)
from koszul import (
    build_complex,
    diamond_exact,
    exactness_by_rank,
    reconstruct_Qfree,
    verify_complex,
    verify_homotopy,
)
from mpoly import (
    AlphaDecomposition,
    IdealCertificate,
    MultiPoly,
    alpha_decomposition,
    decomposition_from_pairs,
    unit_certificate,
    unit_oracle,
)
from opcore import (
    OperatorHandle,
    alpha_solve,
    build_decomposition,
    nullrange_audit,
    projector_audit,
    real_decomposition,
    solve_backward,
    solve_factorwise,
    solve_forward,
)
from polyalg import FactoredPoly, UnityCertificate, partition_of_unity, real_partition
from posets import AlphaSystem, mask_of, optimal_alpha

CONFIG_KEYS = {"mode", "epsilon", "null_tolerance", "budget_terms", "seed"}

# 想定外の例外 (内部エラー) は数学的失敗の 1 と区別する
INTERNAL_ERROR_EXIT = 4


# ---- schema helpers ------------------------------------------------------

def _check_keys(obj, required, optional=(), what="problem"):
    if not isinstance(obj, dict):
        raise InputError(f"{what} must be a JSON object")
    missing = [k for k in required if k not in obj]
    if missing:
        raise InputError(f"{what} is missing keys {missing}")
    unknown = sorted(set(obj) - set(required) - set(optional))
    if unknown:
        raise InputError(f"{what} has unknown keys {unknown}")


def _vector(field, data, what):
    if not isinstance(data, list) or not data:
        raise InputError(f"{what} must be a nonempty list of scalars")
    return field.vector([field.from_json(x) for x in data])


def _operators(field, data, what="operators"):
    if not isinstance(data, list) or not data:
        raise InputError(f"{what} must be a nonempty list")
    return [OperatorHandle.from_json(op, field, name=f"{what}[{i}]") for i, op in enumerate(data)]


def _mpolys(data, what="factors"):
    if not isinstance(data, list) or not data:
        raise InputError(f"{what} must be a nonempty list of polynomials")
    polys = [MultiPoly.from_json(p) for p in data]
    if len({p.nvars for p in polys}) != 1:
        raise InputError(f"{what} mix different numbers of variables")
    return polys


def _subset_components(field, data, what="components"):
    if not isinstance(data, list):
        raise InputError(f"{what} must be a list of {{'subset', 'vector'}}")
    out = {}
    for entry in data:
        _check_keys(entry, ("subset", "vector"), what=f"{what} entry")
        out[mask_of(entry["subset"])] = _vector(field, entry["vector"], f"{what} vector")
    return out


# ---- commands -------------------------------------------------------------

def cmd_decompose(problem):
    _check_keys(problem, ("poly",), ("operator", "method", "real"))
    field = get_field()
    poly = FactoredPoly.from_json(problem["poly"], field)
    real = bool(problem.get("real", False))
    if real:
        certificate = real_partition(poly)
    else:
        certificate = partition_of_unity(poly, problem.get("method", "auto"))
    logging.info(f"decompose: ell={poly.ell}, degree={poly.degree}, mode={certificate.mode}")
    payload = {"kind": "decompose_report", "certificate": certificate.to_json()}
    if "operator" in problem:
        D = OperatorHandle.from_json(problem["operator"], field, name="D")
        dec = real_decomposition(D, poly) if real else build_decomposition(D, poly)
        payload["projectors"] = projector_audit(dec).to_json()
        if D.dim <= settings["dense_limit"]:
            payload["null_range"] = nullrange_audit(dec).to_json()
        if not payload["projectors"]["ok"]:
            raise MathematicalFailure("projector laws failed; see log")
    return payload, 0


def _solve_alpha(problem, field):
    _check_keys(problem, ("factors", "alpha", "operators", "f", "components"))
    factors = _mpolys(problem["factors"])
    alpha = AlphaSystem.from_json(problem["alpha"])
    ops = _operators(field, problem["operators"])
    f = _vector(field, problem["f"], "f")
    decomposition = alpha_decomposition(factors, alpha, settings["budget_terms"])
    components = _subset_components(field, problem["components"])
    report = alpha_solve(ops, factors, decomposition.alpha, decomposition.cofactors, f, components)
    payload = report.to_json()
    payload["decomposition"] = decomposition.to_json()
    return payload


def cmd_solve(problem):
    field = get_field()
    if "alpha" in problem:
        payload = _solve_alpha(problem, field)
    else:
        _check_keys(problem, ("poly", "operator", "f"), ("components", "real"))
        poly = FactoredPoly.from_json(problem["poly"], field)
        D = OperatorHandle.from_json(problem["operator"], field, name="D")
        dec = real_decomposition(D, poly) if problem.get("real") else build_decomposition(D, poly)
        f = _vector(field, problem["f"], "f")
        if "components" in problem:
            components = [_vector(field, c, f"components[{i}]")
                          for i, c in enumerate(problem["components"])]
            report = solve_backward(dec, components, f)
        else:
            report = solve_factorwise(dec, f)
        forward = solve_forward(dec, report.reconstruction)
        # F(B(t)) = t のチェック
        report.extra["forward_roundtrip"] = all(
            field.is_zero_vector(a - b, scale=field.norm(b))
            for a, b in zip(forward, report.components))
        payload = report.to_json()
        payload["certificate"] = dec.certificate.to_json()
    logging.info(f"solve: residual {payload['residual']:.3e}")
    if payload["residual"] > max(field.epsilon, field.null_tolerance) * 10:
        raise MathematicalFailure(f"solve residual {payload['residual']:.3e} too large")
    return payload, 0


KOSZUL_CHECKS = ("complex", "homotopy", "exactness", "diamonds", "qfree")


def cmd_koszul(problem):
    _check_keys(problem, ("operators",), ("homotopy", "f", "components", "checks"))
    field = get_field()
    factors = _operators(field, problem["operators"])
    homotopy = _operators(field, problem["homotopy"], "homotopy") if "homotopy" in problem else None
    checks = problem.get("checks", list(KOSZUL_CHECKS))
    unknown = sorted(set(checks) - set(KOSZUL_CHECKS))
    if unknown:
        raise InputError(f"unknown koszul checks {unknown}")
    kc = build_complex(factors, homotopy)
    payload = {"kind": "koszul_report", "complex": kc.to_json()}
    if "complex" in checks:
        payload["verify_complex"] = verify_complex(kc).to_json()
    if "homotopy" in checks and homotopy is not None:
        payload["verify_homotopy"] = verify_homotopy(kc).to_json()
    if "exactness" in checks and kc.materializable:
        payload["exactness"] = exactness_by_rank(kc).to_json()
    if "diamonds" in checks and kc.materializable:
        payload["diamonds"] = [{"i": i, "j": j, "exact": diamond_exact(kc, i, j)}
                               for i in range(kc.ell + 1) for j in range(i + 1, kc.ell + 1)]
    if "qfree" in checks and "f" in problem and "components" in problem:
        f = _vector(field, problem["f"], "f")
        components = [_vector(field, c, f"components[{i}]")
                      for i, c in enumerate(problem["components"])]
        payload["qfree"] = reconstruct_Qfree(kc, f, components).to_json()
    logging.info(f"koszul: ell={kc.ell}, n={kc.dim}, checks={checks}")
    return payload, 0


def cmd_certify(problem):
    budget = settings["budget_terms"]
    if "generators" in problem:
        _check_keys(problem, ("generators",))
        cert = unit_certificate(_mpolys(problem["generators"], "generators"), budget)
        logging.info(f"certify: ideal is {cert.status}")
        return cert.to_json(), 0 if cert.is_unit else MathematicalFailure.exit_code

    _check_keys(problem, ("factors",), ("alpha", "optimal", "pairs"))
    factors = _mpolys(problem["factors"])
    ell = len(factors) - 1
    if "alpha" in problem:
        decomposition = alpha_decomposition(factors, AlphaSystem.from_json(problem["alpha"]), budget)
        return decomposition.to_json(), 0
    if problem.get("pairs"):
        cofactors = decomposition_from_pairs(factors, budget)
        decomposition = AlphaDecomposition(tuple(factors), AlphaSystem.singletons(ell),
                                           {1 << i: q for i, q in enumerate(cofactors)})
        return decomposition.to_json(), 0
    if problem.get("optimal"):
        alpha_opt, beta_opt = optimal_alpha(ell, unit_oracle(factors, budget))
        payload = {"kind": "optimal_alpha", "alpha": alpha_opt.to_json(), "beta": beta_opt.to_json()}
        return payload, 0 if alpha_opt.members else MathematicalFailure.exit_code
    raise InputError("certify needs 'generators', or 'factors' with 'alpha', 'pairs' or 'optimal'")


def cmd_gjms(problem):
    _check_keys(problem, ("n", "k"), ("Sc", "model", "f", "mu"))
    field = get_field()
    n, k = problem["n"], problem["k"]
    spec = gjms_coefficients(n, k)
    payload = {"kind": "gjms_report", "spec": spec.to_json()}
    if "model" not in problem:
        return payload, 0

    model = SpectralModel.from_json(problem["model"], n)
    Sc = problem.get("Sc")
    if Sc is None:
        Sc = model.scalar_curvature
    if Sc is None:
        raise InputError("gjms needs 'Sc' unless the model is a preset")
    spec = spec.with_curvature(Sc)
    gjms_operator(spec, model, field)
    payload["spec"] = spec.to_json()
    payload["model"] = {"dim": model.dim, **model.to_json()}
    payload["nullspace"] = gjms_nullspace(spec, model, field).to_json()
    if spec.Sc != 0:
        f = _vector(field, problem["f"], "f") if "f" in problem else field.vector([1] * model.dim)
        payload["solve"] = gjms_solve(spec, model, f, field).to_json()
    if "mu" in problem:
        payload["eigenstructure"] = gjms_eigenstructure(spec, model, field.from_json(problem["mu"]),
                                                        field).to_json()
    logging.info(f"gjms: n={n}, k={k}, model dim {model.dim}")
    return payload, 0


# ---- verification ---------------------------------------------------------

VERIFIERS = {
    "unity_certificate": lambda obj: UnityCertificate.from_json(obj).verify(),
    "ideal_certificate": lambda obj: IdealCertificate.from_json(obj).verify(settings["budget_terms"]),
    "alpha_decomposition": lambda obj: AlphaDecomposition.from_json(obj).verify(),
}


def verify_payload(payload):
    """Re-run the identity check of every certificate found in a JSON payload."""
    checked, failures = [], []

    def walk(node, path):
        if isinstance(node, dict):
            kind = node.get("kind")
            if kind in VERIFIERS:
                checked.append(path)
                if not VERIFIERS[kind](node):
                    failures.append(path)
                return
            for key, value in node.items():
                walk(value, f"{path}.{key}")
        elif isinstance(node, list):
            for i, value in enumerate(node):
                walk(value, f"{path}[{i}]")

    walk(payload, "$")
    return {"kind": "verification", "checked": checked, "failures": failures, "ok": not failures}


def cmd_verify(problem):
    report = verify_payload(problem)
    if not report["checked"]:
        raise InputError("no certificate found in the input")
    logging.info(f"verify: {len(report['checked'])} certificates, {len(report['failures'])} failures")
    return report, 0 if report["ok"] else MathematicalFailure.exit_code


COMMANDS = {
    "decompose": cmd_decompose,
    "solve": cmd_solve,
    "koszul": cmd_koszul,
    "certify": cmd_certify,
    "gjms": cmd_gjms,
    "verify": cmd_verify,
}


# ---- output ----------------------------------------------------------------

def _json_default(value):
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)


def _find_table(node):
    if isinstance(node, dict):
        rows = node.get("table")
        if isinstance(rows, list) and rows and all(isinstance(r, dict) for r in rows):
            return rows
        for value in node.values():
            found = _find_table(value)
            if found:
                return found
    return None


def _cell(value):
    if isinstance(value, (dict, list)):
        return json.dumps(value, ensure_ascii=False, default=_json_default)
    return str(value)


def render_table(payload):
    rows = _find_table(payload)
    if rows:
        columns = list(rows[0])
        cells = [[_cell(r.get(c, "")) for c in columns] for r in rows]
        widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
        lines.extend("  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells)
        return "\n".join(lines)
    width = max((len(k) for k in payload), default=0)
    return "\n".join(f"{k.ljust(width)}  {_cell(v)}" for k, v in payload.items())


def write_csv(payload, path):
    rows = _find_table(payload)
    if not rows:
        logging.warning("--csv given but the report has no table")
        return
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(v) for k, v in row.items()})
    logging.info(f"Wrote {len(rows)} rows to {path}")


def emit(payload, args):
    if args.table:
        print(render_table(payload))
    else:
        print(json.dumps(payload, indent=2, ensure_ascii=False, default=_json_default))
    if args.csv:
        write_csv(payload, args.csv)


# ---- entry point -----------------------------------------------------------

def read_problem(path):
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise InputError(f"problem file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise InputError(f"problem file is not valid JSON: {e}") from e


def configure(args, file_config):
    """File config first, command-line flags on top; OPKIT_BUDGET wins over both."""
    overrides = {}
    if file_config is not None:
        _check_keys(file_config, (), CONFIG_KEYS, what="config")
        overrides.update(file_config)
    for key in ("mode", "epsilon", "seed", "budget_terms", "log_level"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    update_settings(**overrides)
    logging.getLogger().setLevel(settings["log_level"].upper())


def parse_arguments(argv=None):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--mode', choices=['exact', 'float'],
                        help='Arithmetic mode (default: OPKIT_MODE or exact)')
    common.add_argument('--epsilon', type=float,
                        help='Relative equality tolerance in float mode')
    common.add_argument('--seed', type=int,
                        help='Seed for randomized spot checks')
    common.add_argument('--budget-terms', dest='budget_terms', type=int,
                        help='Groebner term budget (OPKIT_BUDGET overrides)')
    common.add_argument('--table', action='store_true',
                        help='Print a human readable table instead of JSON')
    common.add_argument('--csv', metavar='PATH',
                        help='Also write the report table as CSV')
    common.add_argument('--verify', action='store_true',
                        help='Re-validate every emitted certificate')
    common.add_argument('--log-level', dest='log_level',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='Logging level (default: OPKIT_LOG_LEVEL or INFO)')

    parser = argparse.ArgumentParser(description='opkit: decompositions of polynomial operators')
    sub = parser.add_subparsers(dest='command', required=True)
    for name, help_text in (
        ('decompose', 'Partition of unity and projector report for a factored polynomial'),
        ('solve', 'Solve P[D] u = f through the factor problems'),
        ('koszul', 'Koszul complex checks for a commuting family'),
        ('certify', 'Unit ideal and alpha decomposition certificates'),
        ('gjms', 'GJMS coefficients, null space and second-order reduction'),
        ('verify', 'Re-check the certificates in a JSON file'),
    ):
        p = sub.add_parser(name, help=help_text, parents=[common])
        p.add_argument('file', help="JSON problem file ('-' for stdin)")
    return parser.parse_args(argv)


def main(argv=None):
    args = parse_arguments(argv)
    logging.basicConfig(
        level=(args.log_level or settings["log_level"]).upper(),
        format='%(asctime)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )
    try:
        problem = read_problem(args.file)
        file_config = None
        if args.command != "verify" and isinstance(problem, dict):
            file_config = problem.pop("config", None)
        configure(args, file_config)
        logging.info(f"Running {args.command} on {args.file} (mode={settings['mode']})")

        payload, code = COMMANDS[args.command](problem)
        if args.verify and args.command != "verify":
            report = verify_payload(payload)
            payload["verification"] = report
            if not report["ok"]:
                code = MathematicalFailure.exit_code
        emit(payload, args)
        return code
    except KeyboardInterrupt:
        logging.info("User interrupted (Ctrl+C)")
        return 130
    except OpkitError as e:
        logging.error(f"{e.kind}: {e}")
        print(json.dumps({"error": str(e), "kind": e.kind}, indent=2, ensure_ascii=False))
        return e.exit_code
    except Exception as e:
        logging.error(f"Error occurred: {str(e)}")
        logging.error(f"Traceback: {traceback.format_exc()}")
        print(json.dumps({"error": f"internal error: {e}", "kind": "internal_error"},
                         indent=2, ensure_ascii=False))
        return INTERNAL_ERROR_EXIT


if __name__ == "__main__":
    sys.exit(main())
