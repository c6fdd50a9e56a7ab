"""``polartomo`` command line: simulate | tomo | plane | qpt.

Exit codes: 0 success, 2 usage or parse error, 3 I/O error, 4 MLE did not
converge (the result is still written). Every JSON output carries a
provenance block, and ``manifest.json`` records digests of all files a run
wrote, so two runs with the same flags and seed produce identical bytes.
"""

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from . import counts as cnt
from . import optics, plotting, ptomo, states, tomo
from .errors import ParseError, PolartomoError, UnknownLabel

log = logging.getLogger("polartomo")

EXIT_OK, EXIT_PARSE, EXIT_IO, EXIT_NOT_CONVERGED = 0, 2, 3, 4
OUT_ENV = "POLARTOMO_OUT"


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# -- provenance and atomic output ---------------------------------------------------


def digest(data):
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.blake2b(data, digest_size=8).hexdigest()


class Run:
    """Collects outputs for one command and writes them atomically."""

    def __init__(self, command, argv, seed, out_dir):
        self.command = command
        self.argv = list(argv)
        self.seed = seed
        self.out_dir = out_dir
        self.inputs = {}
        self.outputs = {}

    def provenance(self):
        return {
            "tool": "polartomo",
            "version": __version__,
            "command": ["polartomo", *self.argv],
            "seed": self.seed,
            "inputs": dict(sorted(self.inputs.items())),
        }

    def read_input(self, path):
        try:
            with open(path, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise CLIError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from None
        self.inputs[path] = digest(data)
        return data.decode("utf-8")

    def check_writable(self):
        try:
            os.makedirs(self.out_dir, exist_ok=True)
        except OSError as exc:
            raise CLIError(f"cannot create output directory {self.out_dir}: {exc.strerror}", EXIT_IO) from None
        if not os.access(self.out_dir, os.W_OK):
            raise CLIError(f"output directory {self.out_dir} is not writable", EXIT_IO)

    def add_json(self, name, doc):
        doc = dict(doc)
        doc["provenance"] = self.provenance()
        self.outputs[name] = json.dumps(doc, indent=1) + "\n"

    def add_text(self, name, text):
        self.outputs[name] = text

    def write(self):
        files = {name: digest(text) for name, text in sorted(self.outputs.items())}
        self.add_json("manifest.json", {"files": files})
        for name, text in self.outputs.items():
            _atomic_write(os.path.join(self.out_dir, name), text)
        return [os.path.join(self.out_dir, n) for n in self.outputs]


def _atomic_write(path, text):
    d = os.path.dirname(path) or "."
    try:
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise CLIError(f"cannot write {path}: {exc.strerror}", EXIT_IO) from None


# -- argument helpers ---------------------------------------------------------------


class _ElementAction(argparse.Action):
    """Keep every optical-element flag in command-line order in one list."""

    def __call__(self, parser, namespace, values, option_string=None):
        items = list(getattr(namespace, self.dest, None) or [])
        items.append(f"{self.const}:{values}")
        setattr(namespace, self.dest, items)


def _split_target(text):
    if "@" in text:
        body, tgt = text.rsplit("@", 1)
        tgt = tgt.strip().lower()
        if tgt in ("c", optics.COLLECTIVE):
            return body, optics.COLLECTIVE
        try:
            return body, int(tgt)
        except ValueError:
            raise ParseError(f"bad target {tgt!r}", field="element") from None
    return text, 0


def parse_element(item):
    """``hwp:22.5``, ``qwp:45@1``, ``phase:90@0``, ``dec:0:1@collective``."""
    kind, _, rest = item.partition(":")
    body, target = _split_target(rest)
    fields = body.split(":")
    try:
        nums = [float(x) for x in fields]
    except ValueError:
        raise ParseError(f"non-numeric value in {item!r}", field="element") from None
    try:
        if kind == "hwp" and len(nums) == 1:
            return optics.HWP(math.radians(nums[0]), target)
        if kind == "qwp" and len(nums) == 1:
            return optics.QWP(math.radians(nums[0]), target)
        if kind == "phase" and len(nums) == 1:
            return optics.PhasePlate(math.radians(nums[0]), target)
        if kind == "dec" and len(nums) == 2:
            return optics.Decoherer(math.radians(nums[0]), nums[1], target)
    except (ValueError, PolartomoError) as exc:
        raise ParseError(str(exc), field="element") from None
    raise ParseError(f"cannot parse optical element {item!r}", field="element")


def parse_source(text):
    """``theta_p=45,phi=0`` (degrees) -> SourceConfig."""
    vals = {"theta_p": 45.0, "phi": 0.0}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, eq, value = part.partition("=")
        if not eq or key.strip() not in vals:
            raise ParseError(f"expected theta_p=<deg>,phi=<deg>, got {text!r}", field="source")
        try:
            vals[key.strip()] = float(value)
        except ValueError:
            raise ParseError(f"{value!r} is not a number", field="source") from None
    return optics.SourceConfig(math.radians(vals["theta_p"]), math.radians(vals["phi"]))


def _state_summary(rho):
    out = {"purity": states.purity(rho), "linear_entropy": states.linear_entropy(rho)}
    if rho.qubits == 2:
        out["tangle"] = states.tangle(rho)
    return out


def _fmt(d):
    return "  ".join(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}" for k, v in d.items())


# -- commands -----------------------------------------------------------------------


def cmd_simulate(args, run):
    if args.pipeline:
        pipe = optics.loads_pipeline(run.read_input(args.pipeline))
        extra = [parse_element(e) for e in args.elements or ()]
        pipe = optics.PrepPipeline(pipe.source, pipe.elements + tuple(extra))
    else:
        if args.source and args.herald:
            raise ParseError("--source and --herald are mutually exclusive")
        source = parse_source(args.source) if args.source else optics.HERALD
        try:
            pipe = optics.PrepPipeline(source, [parse_element(e) for e in args.elements or ()])
        except PolartomoError as exc:
            raise ParseError(str(exc), field="element") from None
    run.check_writable()
    rho = optics.run_pipeline(pipe)
    settings = cnt.standard_set(pipe.qubits)
    if args.noiseless:
        records = cnt.exact_counts(rho, settings, args.flux)
    else:
        records = cnt.simulate_counts(rho, settings, args.flux, args.seed)
    run.add_text("counts.csv", cnt.write_counts(records))
    summary = _state_summary(rho)
    doc = states.state_to_document(rho)
    doc.update(pipeline=optics.pipeline_to_document(pipe), metrics=summary)
    run.add_json("state.json", doc)
    for path in run.write():
        log.info("wrote %s", path)
    print(_fmt(summary))
    return EXIT_OK


def cmd_tomo(args, run):
    records = cnt.read_counts(run.read_input(args.counts))
    custom = cnt.loads_settings(run.read_input(args.settings)) if args.settings else None
    target = states.loads_state(run.read_input(args.target)) if args.target else None
    run.check_writable()
    table = cnt.resolve_settings([r.setting_label for r in records], custom)
    settings = list(table.values())
    opts = tomo.MLEOptions(
        max_iterations=args.max_iterations,
        gradient_tolerance=args.gradient_tolerance,
        restarts=args.restarts,
        seed=args.seed,
    )
    res = tomo.reconstruct(records, settings, args.method, opts)
    if target is not None:
        res = res.with_target(target)
    doc = tomo.result_to_document(res)
    est = res.estimate
    report = {}
    if res.fidelity_to_target is not None:
        report["fidelity"] = res.fidelity_to_target
    report["purity"] = states.purity(est)
    report["linear_entropy"] = states.linear_entropy(est)
    if est.qubits == 2:
        report["tangle"] = states.tangle(est) if est.physical else float("nan")
    report["physical"] = res.physical
    report["converged"] = res.converged
    doc["report"] = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in report.items()}
    run.add_json("result.json", doc)
    run.write()
    print(_fmt(report))
    if not res.converged:
        print("warning: maximum-likelihood search did not reach the gradient tolerance", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_plane(args, run):
    if args.samples < 0:
        raise ParseError("--samples must be non-negative", field="samples")
    run.check_writable()
    if args.samples == 0:
        print("warning: --samples 0, writing the frontier only", file=sys.stderr)
    frontier = states.sampled_frontier(args.frontier_points)
    bound = states.interpolated_frontier(frontier)
    rng = np.random.default_rng(args.seed)
    points = []
    violations = 0
    for k in range(args.samples):
        rho = states.ginibre(rng, 2)
        s, t = states.linear_entropy(rho), states.tangle(rho)
        if t > bound(s) + 1e-6:
            violations += 1
        points.append(states.PlanePoint(s, t, f"ginibre-{k}"))
    r, s, t = frontier
    lines = ["r,linear_entropy,tangle"] + [f"{a!r},{b!r},{c!r}" for a, b, c in zip(r.tolist(), s.tolist(), t.tolist())]
    run.add_text("frontier.csv", "\n".join(lines) + "\n")
    if args.samples:
        lines = ["label,linear_entropy,tangle"] + [f"{p.label},{p.linear_entropy!r},{p.tangle!r}" for p in points]
        run.add_text("plane.csv", "\n".join(lines) + "\n")
    if args.plot:
        run.add_text("plane.svg", plotting.plane_svg(points, frontier))
    run.add_json("plane.json", {"samples": args.samples, "frontier_points": len(r), "violations": violations})
    run.write()
    print(f"samples={args.samples}  frontier_points={len(r)}  violations={violations}")
    return EXIT_OK


def cmd_qpt(args, run):
    proc = ptomo.parse_process(args.process)
    run.check_writable()
    modes = ("standard", "ancilla") if args.mode == "both" else (args.mode,)
    chis = {}
    for mode in modes:
        fn = ptomo.standard_qpt if mode == "standard" else ptomo.ancilla_qpt
        chis[mode] = fn(proc, args.flux, seed=args.seed, noiseless=args.noiseless)
        run.add_json(f"chi_{mode}.json", ptomo.chi_to_document(chis[mode]))
    table = ptomo.poincare_table(proc)
    mesh = ptomo.sphere_mesh(proc, args.mesh)
    run.add_json("poincare.json", {"process": args.process, "rows": ptomo.table_to_document(table)})
    run.add_text("mesh.csv", ptomo.mesh_to_csv(mesh))
    if args.plot:
        run.add_text("poincare.svg", plotting.poincare_svg(mesh, table, args.process))
    run.write()
    for mode, pm in chis.items():
        print(f"chi ({mode}), basis I X Y Z:")
        for row in pm.chi:
            print("  " + "  ".join(f"{z.real:+.6f}{z.imag:+.6f}j" for z in row))
    print("state   input bloch             output bloch            purity    norm")
    for r in table:
        pur = "   n/a  " if r.purity is None else f"{r.purity:.6f}"
        vin = " ".join(f"{x:+.3f}" for x in r.input_bloch)
        vout = " ".join(f"{x:+.6f}" for x in r.output_bloch)
        print(f"{r.label:<7} {vin:<23} {vout:<23} {pur}  {r.norm:.6f}")
    if args.mode == "both":
        dist = float(np.linalg.norm(chis["standard"].chi - chis["ancilla"].chi))
        print(f"frobenius_distance={dist:.3e}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    common.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or .)")
    common.add_argument("--config", help="JSON file of option defaults; flags override it")
    common.add_argument("--noiseless", action="store_true", help="use exact expected counts")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="polartomo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"polartomo {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="prepare a state and simulate counts")
    g = s.add_argument_group("source")
    g.add_argument("--source", help="pair source, e.g. 'theta_p=45,phi=0' (degrees)")
    g.add_argument("--herald", action="store_true", help="heralded single photon in |H>")
    g.add_argument("--pipeline", help="JSON pipeline document")
    e = s.add_argument_group("elements (applied in command-line order; append @1 for qubit 2)")
    e.add_argument("--hwp", dest="elements", action=_ElementAction, const="hwp", metavar="DEG[@T]")
    e.add_argument("--qwp", dest="elements", action=_ElementAction, const="qwp", metavar="DEG[@T]")
    e.add_argument("--phase", dest="elements", action=_ElementAction, const="phase", metavar="DEG[@T]")
    e.add_argument("--decoherer", dest="elements", action=_ElementAction, const="dec",
                   metavar="DEG:P[@T|@collective]")
    s.add_argument("--flux", type=float, default=10000.0, help="expected pairs per setting")
    s.set_defaults(func=cmd_simulate, elements=None)

    t = sub.add_parser("tomo", parents=[common], help="reconstruct a state from a count file")
    t.add_argument("counts", help="count file (label,counts,flux)")
    t.add_argument("--method", choices=("mle", "inversion"), default="mle")
    t.add_argument("--target", help="state JSON to compare against")
    t.add_argument("--settings", help="JSON list of custom settings")
    t.add_argument("--max-iterations", type=int, default=5000)
    t.add_argument("--gradient-tolerance", type=float, default=1e-8)
    t.add_argument("--restarts", type=int, default=3)
    t.set_defaults(func=cmd_tomo)

    pl = sub.add_parser("plane", parents=[common], help="tangle/linear-entropy plane and MEMS frontier")
    pl.add_argument("--samples", type=int, default=1000)
    pl.add_argument("--frontier-points", type=int, default=10_000)
    pl.add_argument("--no-plot", dest="plot", action="store_false", help="skip plane.svg")
    pl.set_defaults(func=cmd_plane)

    q = sub.add_parser("qpt", parents=[common], help="process tomography demo")
    q.add_argument("--process", required=True, help="e.g. identity, unitary:hwp:45, dephase:0:0.5, loss:1:0.6")
    q.add_argument("--mode", choices=("standard", "ancilla", "both"), default="both")
    q.add_argument("--flux", type=float, default=1e5)
    q.add_argument("--mesh", type=int, default=12, help="latitudes in the sphere mesh")
    q.add_argument("--no-plot", dest="plot", action="store_false", help="skip poincare.svg")
    q.set_defaults(func=cmd_qpt)
    return p, sub


def _load_config(argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return None, {}
    try:
        with open(known.config, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CLIError(f"cannot read {known.config}: {exc.strerror}", EXIT_IO) from None
    try:
        cfg = json.loads(data)
    except json.JSONDecodeError as exc:
        raise CLIError(f"{known.config}: line {exc.lineno}: {exc.msg}", EXIT_PARSE) from None
    if not isinstance(cfg, dict):
        raise CLIError(f"{known.config}: config must be a JSON object", EXIT_PARSE)
    return (known.config, digest(data)), {k.replace("-", "_"): v for k, v in cfg.items()}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, sub = build_parser()
    try:
        cfg_src, cfg = _load_config(argv)
    except CLIError as exc:
        print(f"polartomo: error: {exc}", file=sys.stderr)
        return exc.code
    if cfg:
        for name, subparser in sub.choices.items():
            subparser.set_defaults(**cfg)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    out = args.out or os.environ.get(OUT_ENV) or "."
    run = Run(args.command, argv, args.seed, out)
    if cfg_src:
        run.inputs[cfg_src[0]] = cfg_src[1]
    try:
        return args.func(args, run)
    except CLIError as exc:
        print(f"polartomo: error: {exc}", file=sys.stderr)
        return exc.code
    except (ParseError, UnknownLabel) as exc:
        print(f"polartomo: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except PolartomoError as exc:
        print(f"polartomo: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"polartomo: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
