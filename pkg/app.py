"""Main application orchestrator for the shift-locus atlas."""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from config.settings import ATLAS_VERSION, AtlasConfig, RunConfig
from models.dynamics import RasterJob
from models.errors import AtlasError, ConfigError, ContinuationStalled, InadmissibleWord
from models.itinerary import Itinerary
from repositories.artifact_repository import ArtifactRepository
from services.atlas_service import ParameterAtlas
from services.family_service import make_slice, pole
from services.model_service import ModelMap, model_setup
from services.orbit_service import OrbitClassifier
from services.render_service import ParameterPlaneRenderer
from services.solver_service import (dynamic_periodic_point, dynamic_word, misiurewicz_solve,
                                     parabolic_solve, virtual_center_solve)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_PARTIAL = 2
EXIT_CONFIG = 3

DEFAULT_WINDOW = "-4,8,-6,6"
SOLVE_KINDS = {"virtual-center": "virtual_center", "parabolic": "parabolic",
               "misiurewicz": "misiurewicz"}


class AtlasApp:
    """Main application for rendering, solving and tracing in the lambda plane."""

    def __init__(self, run: RunConfig, verbose: bool = False):
        self.config = AtlasConfig()
        self.run = run
        self.verbose = verbose
        self.setup_logging()
        output_dir = run.get("OUTPUT_DIR", self.config.output_dir)
        self.repository = ArtifactRepository(output_dir)
        self._model: Optional[ModelMap] = None

    def setup_logging(self):
        """Setup logging configuration."""
        level = logging.DEBUG if self.verbose else logging.WARNING
        logging.basicConfig(
            level=level,
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )
        self.logger = logging.getLogger(__name__)

    @property
    def model(self) -> ModelMap:
        if self._model is None:
            if self.verbose:
                self.logger.info(f"Setting up the model map for rho0={self.run.rho!r}...")
            self._model = model_setup(self.run.rho, self.config)
        return self._model

    # ==================== RENDER ====================

    def run_render(self) -> Dict[str, Any]:
        """Rasterize the configured window; writes <name>.ppm and <name>.json."""
        job = self._raster_job()
        renderer = ParameterPlaneRenderer(self.config, verbose=self.verbose)
        results = renderer.render(job)
        name = self.run.get("RENDER_NAME", "parameter_plane")
        results["ppm_path"] = self.repository.save_ppm(f"{name}.ppm", results["rgb"])
        results["sidecar_path"] = self.repository.save_render_sidecar(
            f"{name}.json", job, renderer.LEGEND, results["counts"])
        self._log_render_results(results)
        return results

    def _raster_job(self) -> RasterJob:
        raw = self.run.get("RENDER_WINDOW", DEFAULT_WINDOW)
        try:
            window = tuple(float(v) for v in raw.split(","))
        except ValueError as e:
            raise ConfigError(f"RENDER_WINDOW must be four numbers, got {raw!r}") from e
        if len(window) != 4:
            raise ConfigError(f"RENDER_WINDOW must be four numbers, got {raw!r}")
        resolution = (self.run.get_int("RENDER_WIDTH", 256), self.run.get_int("RENDER_HEIGHT", 256))
        return RasterJob(rho=self.run.rho, window=window, resolution=resolution,
                         budget=self.run.budget())

    def _log_render_results(self, results: Dict[str, Any]) -> None:
        job = results["job"]
        print("\n" + "=" * 60)
        print(f"🖼️  RENDER: rho={job.rho}, {job.resolution[0]}x{job.resolution[1]} px")
        print("=" * 60)
        for region, count in results["counts"].items():
            print(f"  {region:<12} {count:>8} px")
        print(f"\n✅ Wrote {results['ppm_path']}")
        print(f"✅ Wrote {results['sidecar_path']}")

    # ==================== CLASSIFY / MODEL INFO ====================

    def run_classify(self) -> Dict[str, Any]:
        lam = self.run.get_complex("LAMBDA")
        if lam is None:
            raise ConfigError("classify needs LAMBDA (--lambda)")
        classifier = OrbitClassifier(self.config, verbose=self.verbose)
        verdict = classifier.classify_parameter(self.run.rho, lam, self.run.budget(),
                                                resolve_side=True)
        results = {"lambda": lam, "class": verdict}
        print("\n" + "=" * 60)
        print(f"🔎 CLASSIFY lambda={lam}")
        print("=" * 60)
        print(f"  region:         {verdict.region.value}")
        print(f"  period(lambda): {verdict.period_lambda}")
        print(f"  period(mu):     {verdict.period_mu}")
        if verdict.shift_side is not None:
            print(f"  shift side:     {verdict.shift_side.value}")
        if verdict.ambiguous:
            print("  ⚠️  orbit passed through a pole; verdict is ambiguous")
        return results

    def run_model_info(self) -> Dict[str, Any]:
        m = self.model
        poles = {j: pole(m.slice, j) for j in range(-3, 4)}
        print("\n" + "=" * 60)
        print(f"📐 MODEL MAP for rho0={m.rho}")
        print("=" * 60)
        print(f"  lambda_0 = {m.lambda0}")
        print(f"  mu_0     = {m.mu0}")
        print(f"  q0       = {m.q0}")
        print(f"  r0       = {m.r0}")
        for j, p in poles.items():
            print(f"  p_{j:<3}    = {p}")
        return {"lambda0": m.lambda0, "mu0": m.mu0, "q0": m.q0, "r0": m.r0, "poles": poles}

    # ==================== SOLVE ====================

    def run_solve(self) -> Dict[str, Any]:
        """Solve each requested word; failures become error records instead of aborting."""
        results: Dict[str, Any] = {"records": [], "solved": 0, "errors": []}
        raw_words = self.run.get("SOLVE_WORDS")
        if not raw_words:
            raise ConfigError("solve needs SOLVE_WORDS (--word)")
        kind = self.run.get("SOLVE_KIND")
        if kind is not None and kind not in SOLVE_KINDS:
            raise ConfigError(f"SOLVE_KIND must be one of {sorted(SOLVE_KINDS)}, got {kind!r}")
        seed = self.run.get_complex("SOLVE_SEED")
        seed_z = self.run.get_complex("SOLVE_SEED_Z")

        for raw in [w.strip() for w in raw_words.split(";") if w.strip()]:
            try:
                word = Itinerary.parse(raw)
                record = self._solve_one(word, kind, seed, seed_z)
                results["records"].append(record)
                results["solved"] += 1
            except AtlasError as e:
                error = {"kind": SOLVE_KINDS.get(kind, kind) if kind else None, "word": raw,
                         "error": type(e).__name__, "message": str(e), "version": ATLAS_VERSION}
                results["records"].append(error)
                results["errors"].append(error)
                if self.verbose:
                    self.logger.error(f"Solve failed for {raw!r}: {e}")

        name = self.run.get("SOLVE_NAME", "solutions")
        results["path"] = self.repository.save_records(f"{name}.jsonl", results["records"])
        self._log_solve_results(results)
        return results

    def _solve_one(self, word: Itinerary, kind: Optional[str], seed: Optional[complex],
                   seed_z: Optional[complex]) -> Dict[str, Any]:
        expected = ("virtual-center" if word.is_finite else
                    "parabolic" if word.is_periodic else "misiurewicz")
        if word.is_infinity_terminal:
            raise ConfigError("the infinity symbol cannot be solved for")
        if kind is not None and kind != expected:
            raise ConfigError(f"word {word} names a {expected} point, not {kind}")
        labels = None
        if seed is None:
            seed = self._seed_from_trace(word)
            if word.is_finite:
                # the traced terminal knows which poles of f_lambda the model word names
                labels = dynamic_word(make_slice(self.run.rho, seed), len(word.preperiod))
        if word.is_finite:
            return virtual_center_solve(self.run.rho, word, seed, labels=labels).to_record()
        if seed_z is None:
            seed_z = dynamic_periodic_point(make_slice(self.run.rho, seed), word.period)
        if word.is_periodic:
            result = parabolic_solve(self.run.rho, len(word.period), seed, seed_z, word=word.format())
        else:
            result = misiurewicz_solve(self.run.rho, len(word.preperiod), len(word.period), seed,
                                       seed_z, word=word.format())
        return result.to_record()

    def _seed_from_trace(self, word: Itinerary) -> complex:
        if self.verbose:
            self.logger.info(f"No seed given for {word}; tracing its accessibility path")
        atlas = ParameterAtlas(self.model, self.config, verbose=self.verbose)
        traced = atlas.trace_accessibility_path(word, self.run.get_int("TRACE_SAMPLES", 32))
        return traced.terminal_estimate

    def _log_solve_results(self, results: Dict[str, Any]) -> None:
        print("\n" + "=" * 60)
        print(f"🎯 SOLVE: {results['solved']} solved, {len(results['errors'])} failed")
        print("=" * 60)
        for record in results["records"]:
            if "error" in record:
                print(f"  ❌ {record['word']}: {record['error']} - {record['message']}")
            else:
                print(f"  ✅ {record['word']} [{record['kind']}]: "
                      f"lambda={record['lambda_re']:+.12f}{record['lambda_im']:+.12f}i "
                      f"residual={record['residual']:.2e}")
        print(f"\n📄 Records: {results['path']}")

    # ==================== TRACE ====================

    def run_trace(self) -> Dict[str, Any]:
        raw = self.run.get("TRACE_WORD")
        if not raw:
            raise ConfigError("trace needs TRACE_WORD (--word)")
        try:
            word = Itinerary.parse(raw)
        except InadmissibleWord as e:
            raise ConfigError(f"TRACE_WORD is not an itinerary: {e}") from e
        samples = self.run.get_int("TRACE_SAMPLES", 64)
        depth = self.run.get("TRACE_DEPTH")
        name = self.run.get("TRACE_NAME", "trace")
        atlas = ParameterAtlas(self.model, self.config, verbose=self.verbose)
        results: Dict[str, Any] = {"word": word, "traced": None, "stalled": False, "errors": []}
        try:
            traced = atlas.trace_accessibility_path(word, samples,
                                                    int(depth) if depth is not None else None)
        except ContinuationStalled as e:
            results["stalled"] = True
            results["errors"].append(str(e))
            traced = e.partial
            if traced is None:
                raise
        results["traced"] = traced
        results["path"] = self.repository.save_trace(f"{name}.csv", traced, self.run.rho)
        self._log_trace_results(results)
        return results

    def _log_trace_results(self, results: Dict[str, Any]) -> None:
        traced = results["traced"]
        print("\n" + "=" * 60)
        print(f"🧭 TRACE {traced.target} [{traced.target_kind.value}]")
        print("=" * 60)
        print(f"  samples:   {len(traced.lambda_samples)}")
        if traced.depth:
            print(f"  depth:     {traced.depth} branches")
        if traced.residuals:
            print(f"  max residual: {max(traced.residuals):.2e}")
        if results["stalled"]:
            print(f"  ⚠️  continuation stalled: {results['errors'][0]}")
        if traced.terminal_estimate is not None:
            print(f"  terminal:  {traced.terminal_estimate}")
        if traced.solver_distance is not None:
            print(f"  solver:    {traced.solver_estimate} (distance {traced.solver_distance:.2e})")
        elif traced.solver_error:
            print(f"  ❌ solver cross-check failed: {traced.solver_error}")
        print(f"\n📄 Path: {results['path']}")


def _overrides(args: argparse.Namespace) -> Dict[str, Optional[str]]:
    """Command-line flags mapped onto recipe keys."""
    mapping = {
        "rho": "RHO", "output_dir": "OUTPUT_DIR", "max_iter": "MAX_ITER", "tol": "TOL",
        "window": "RENDER_WINDOW", "width": "RENDER_WIDTH", "height": "RENDER_HEIGHT",
        "name": None, "lam": "LAMBDA", "kind": "SOLVE_KIND", "seed": "SOLVE_SEED",
        "seed_z": "SOLVE_SEED_Z", "samples": "TRACE_SAMPLES", "depth": "TRACE_DEPTH",
    }
    out: Dict[str, Optional[str]] = {}
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None and key is not None:
            out[key] = str(value)
    name_keys = {"render": "RENDER_NAME", "solve": "SOLVE_NAME", "trace": "TRACE_NAME"}
    if getattr(args, "name", None) and args.command in name_keys:
        out[name_keys[args.command]] = args.name
    words: List[str] = getattr(args, "word", None) or []
    if words and args.command == "solve":
        out["SOLVE_WORDS"] = ";".join(words)
    elif words and args.command == "trace":
        out["TRACE_WORD"] = words[0]
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Shift-locus atlas: render the lambda plane, solve boundary points and '
                    'trace accessibility paths',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Render the default window at rho = 2/3
  python app.py render --width 512 --height 512

  # Classify one parameter
  python app.py classify --lambda=-0.2,0.1

  # Solve a virtual center; with an explicit seed the word names poles of f_lambda
  python app.py solve --word=-1 --seed=0.97,-2.2

  # Trace the accessibility path to the parabolic parameter 0-bar
  python app.py trace --word "|0" --samples 64

  # Use a recipe file with command-line overrides
  python app.py --config doc/recipes/figure1.env render --width 128
        """
    )
    parser.add_argument('--config', help='Recipe file in dotenv syntax')
    parser.add_argument('--rho', help='Multiplier rho, e.g. 2/3 or 0.5,0.1')
    parser.add_argument('--output-dir', dest='output_dir', help='Directory for artifacts')
    parser.add_argument('--max-iter', dest='max_iter', type=int, help='Orbit iteration budget')
    parser.add_argument('--tol', type=float, help='Cycle detection tolerance')
    parser.add_argument('--verbose', action='store_true', help='Enable debug logging')

    sub = parser.add_subparsers(dest='command', required=True)

    render = sub.add_parser('render', help='Rasterize the lambda plane into a PPM image')
    render.add_argument('--window', help='re_min,re_max,im_min,im_max')
    render.add_argument('--width', type=int)
    render.add_argument('--height', type=int)
    render.add_argument('--name', help='Artifact base name')

    classify = sub.add_parser('classify', help='Classify a single lambda')
    classify.add_argument('--lambda', dest='lam', help='Parameter lambda')

    solve = sub.add_parser('solve', help='Solve virtual-center, parabolic or Misiurewicz points')
    solve.add_argument('--word', action='append', help='Itinerary, repeatable ("0", "|0", "1|0")')
    solve.add_argument('--kind', choices=sorted(SOLVE_KINDS))
    solve.add_argument('--seed', help='Seed lambda (traced when omitted)')
    solve.add_argument('--seed-z', dest='seed_z', help='Seed cycle point')
    solve.add_argument('--samples', type=int, help='Samples per branch when tracing a seed')
    solve.add_argument('--name', help='Artifact base name')

    trace = sub.add_parser('trace', help='Trace the accessibility path to an itinerary')
    trace.add_argument('--word', action='append', help='Target itinerary')
    trace.add_argument('--samples', type=int, help='Samples per tree branch (>= 32)')
    trace.add_argument('--depth', type=int, help='Branches followed for infinite words')
    trace.add_argument('--name', help='Artifact base name')

    sub.add_parser('model-info', help='Print lambda_0, mu_0, q0, r0 and the poles')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        run = RunConfig.from_file(args.config, _overrides(args), default_rho=AtlasConfig().rho)
        app = AtlasApp(run, verbose=args.verbose)
        if args.command == 'render':
            app.run_render()
        elif args.command == 'classify':
            app.run_classify()
        elif args.command == 'model-info':
            app.run_model_info()
        elif args.command == 'solve':
            results = app.run_solve()
            if results["errors"]:
                print(f"\n⚠️  {len(results['errors'])} request(s) failed")
                return EXIT_PARTIAL
        elif args.command == 'trace':
            results = app.run_trace()
            if results["stalled"] or results["traced"].solver_error:
                return EXIT_PARTIAL
    except ConfigError as e:
        print(f"\n❌ Configuration error: {e}")
        return EXIT_CONFIG
    except AtlasError as e:
        print(f"\n❌ Error: {e}")
        return EXIT_PARTIAL
    except Exception as e:
        print(f"\n❌ Unexpected error: {e}")
        return EXIT_UNEXPECTED
    print("\n✅ Done")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
