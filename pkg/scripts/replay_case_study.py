"""Replay the driver-selection and TEEM/EEMR comparison workflow on synthetic data.

Prints a selection table (test statistic, p-value, decision per driver), the
preparation summary, and the cross-validated accuracy comparison.

    python scripts/replay_case_study.py --seed 42 --n 200
"""
import argparse
import time

from riskest import dataio, pipeline


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=42, help="generator and fold seed")
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--noise", type=float, help="override the generator noise sd")
    ap.add_argument("--case-study-drivers", action="store_true",
                    help="force the driver set fs, mts, lt, ma, pre instead of threshold selection")
    args = ap.parse_args(argv)

    overrides = {"seed": args.seed, "n": args.n}
    if args.noise is not None:
        overrides["noise_sd"] = args.noise
    ds = dataio.generate_synthetic(dataio.GeneratorConfig(**overrides))

    selection = pipeline.SelectionConfig()
    if args.case_study_drivers:
        wanted = set(pipeline.CASE_STUDY_DRIVERS)
        selection = pipeline.SelectionConfig(
            force_include=tuple(d for d in pipeline.DRIVER_ORDER if d in wanted),
            force_exclude=tuple(d for d in pipeline.DRIVER_ORDER if d not in wanted),
        )
    config = pipeline.PipelineConfig(selection=selection, k=args.k)

    t0 = time.perf_counter()
    result = pipeline.run_workflow(ds, config=config, seed=args.seed)
    elapsed = time.perf_counter() - t0

    print(f"{'driver':<8}{'test':<9}{'statistic':>11}{'p':>12}{'n':>6}  decision")
    for row in result.selection.rows:
        print(f"{row.name:<8}{row.test:<9}{row.statistic:>11.3f}{row.p_value:>12.3g}{row.n:>6}  "
              f"{'yes' if row.selected else 'no '}  {row.reason}")

    prep = result.preparation
    print(f"\nprojects {prep.input_count}: dropped {len(prep.dropped_missing)} incomplete, "
          f"{len(prep.dropped_outlier)} outliers, retained {prep.retained_count}")

    print(f"\n{args.k}-fold cross-validation (seed {args.seed})")
    print(f"{'model':<6}{'phase':<7}{'MMRE':>8}{'Pred(.25)':>11}{'R2':>8}")
    for kind in pipeline.KINDS:
        for phase in ("train", "test"):
            m = result.cv.mean(kind, phase)
            print(f"{kind:<6}{phase:<7}{m['mmre']:>8.3f}{m['pred_25']:>11.3f}{m['r_squared']:>8.3f}")
    print(f"\nworkflow time {elapsed:.2f}s")


if __name__ == "__main__":
    main()
