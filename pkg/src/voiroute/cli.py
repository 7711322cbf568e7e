"""Command-line front end: gen, train, route, eval, costs, pareto.

Every command is deterministic given its flags and --seed; reports carry no
timestamps so identical invocations produce byte-identical output files.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from .boosting import TrainConfig
from .corpus import CorpusError, load_records, write_records
from .costs import ProfileError, load_profile, normalized_costs
from .harness import (
    CALIBRATION_METHODS,
    EvalReport,
    GridSpec,
    available_policy_names,
    export_pareto_csv,
    run_cv,
    save_reports,
    train_bank,
)
from .policy import PolicyConfig, PredictorBank, route_greedy_probs
from .synthworld import generate, load_truth, load_world, write_truth


@click.group()
def main() -> None:
    """Cost-aware fidelity routing: train predictors, route questions,
    and evaluate accuracy/cost trade-offs."""


def _fail(message: str) -> None:
    raise click.ClickException(message)


@main.command("gen")
@click.option("--world", required=True, help="Builtin world name or world spec JSON path.")
@click.option("--n", "n_questions", default=1000, show_default=True, help="Question count.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Corpus JSONL path.")
def cmd_gen(world: str, n_questions: int, seed: int, out: str) -> None:
    """Generate a synthetic corpus plus its truth sidecar."""
    try:
        spec = load_world(world, n_questions=n_questions, seed=seed)
        corpus = generate(spec)
    except (ValueError, OSError) as exc:
        _fail(str(exc))
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    count = write_records(corpus.dataset.records, out_path)
    truth_path = out_path.with_suffix(".truth.jsonl")
    write_truth(corpus.truth, truth_path)
    click.echo(f"wrote {count} records to {out_path} (truth sidecar: {truth_path})")


@main.command("train")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", default="edge-cloud", show_default=True)
@click.option("--calibration", default="isotonic", show_default=True,
              type=click.Choice(CALIBRATION_METHODS))
@click.option("--max-terms", default=None, type=int, help="Vocabulary size cap.")
@click.option("--n-estimators", default=100, show_default=True)
@click.option("--learning-rate", default=0.1, show_default=True)
@click.option("--max-depth", default=3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Model directory.")
def cmd_train(data, profile, calibration, max_terms, n_estimators, learning_rate,
              max_depth, seed, out) -> None:
    """Train a predictor bank on a correctness log and persist it."""
    try:
        cost_profile = load_profile(profile)
        dataset = load_records(data)
        config = TrainConfig(
            n_estimators=n_estimators,
            learning_rate=learning_rate,
            max_depth=max_depth,
            seed=seed,
        )
        bank = train_bank(
            dataset.records,
            cost_profile.level_ids,
            gbr_config=config,
            calibration=calibration,
            max_terms=max_terms,
        )
    except (CorpusError, ProfileError, ValueError) as exc:
        _fail(str(exc))
    bank.save(out)
    click.echo(
        f"trained bank over {len(cost_profile.level_ids)} fidelities "
        f"({len(dataset.qids)} questions) -> {out}"
    )


@main.command("route")
@click.option("--model", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--question", required=True)
@click.option("--profile", default="edge-cloud", show_default=True)
@click.option("--lambda", "lam", default=0.002, show_default=True,
              help="Cost-accuracy trade-off coefficient.")
@click.option("--tau", default=0.0, show_default=True, help="Escalation threshold.")
def cmd_route(model, question, profile, lam, tau) -> None:
    """Route one question and print the decision with its VOI trace."""
    try:
        bank = PredictorBank.load(model)
        cost_profile = load_profile(profile)
        costs = normalized_costs(cost_profile)
        config = PolicyConfig(lam=lam, tau=tau)
    except (ProfileError, ValueError, OSError) as exc:
        _fail(str(exc))
    start = time.perf_counter()
    probs = bank.predict_success(question)
    decision = route_greedy_probs(probs, costs, config)
    elapsed_us = (time.perf_counter() - start) * 1e6
    payload = decision.to_json_dict()
    payload["routing_time_us"] = elapsed_us
    click.echo(json.dumps(payload, indent=2, sort_keys=True))


@main.command("eval")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", default="edge-cloud", show_default=True)
@click.option("--k", default=5, show_default=True, help="Fold count.")
@click.option("--seed", default=0, show_default=True)
@click.option("--policies", default="voi,accuracy_only,fixed:caption,fixed:full",
              show_default=True, help="Comma-separated policy names.")
@click.option("--calibration", default="isotonic", show_default=True,
              type=click.Choice(CALIBRATION_METHODS))
@click.option("--max-terms", default=None, type=int)
@click.option("--truth", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Truth sidecar (with --world) enabling the oracle policy.")
@click.option("--world", default=None,
              help="World name or spec path the truth sidecar refers to.")
@click.option("--lambda-grid", default=None,
              help="Comma-separated lambda values overriding the default grid.")
@click.option("--tau-grid", default=None,
              help="Comma-separated tau values overriding the default grid.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
def cmd_eval(data, profile, k, seed, policies, calibration, max_terms, truth, world,
             lambda_grid, tau_grid, out) -> None:
    """Run the cross-validation protocol and export reports plus a Pareto CSV."""
    try:
        cost_profile = load_profile(profile)
        dataset = load_records(data)
    except (CorpusError, ProfileError) as exc:
        _fail(str(exc))

    names = tuple(p.strip() for p in policies.split(",") if p.strip())
    valid = available_policy_names(cost_profile)
    unknown = [n for n in names if n not in valid]
    if unknown:
        _fail(f"unknown policy name(s) {unknown}; valid names: {', '.join(valid)}")

    true_probs = None
    if "oracle" in names:
        if truth is None or world is None:
            _fail("the oracle policy needs both --truth and --world")
        truth_table = load_truth(truth)
        spec = load_world(world, n_questions=1, seed=seed)
        true_probs = {
            qid: dict(spec.archetype(name).true_p) for qid, name in truth_table.items()
        }

    grid_kwargs = {}
    if lambda_grid is not None:
        grid_kwargs["lambda_values"] = tuple(float(v) for v in lambda_grid.split(","))
    if tau_grid is not None:
        grid_kwargs["tau_values"] = tuple(float(v) for v in tau_grid.split(","))
    grid = GridSpec(**grid_kwargs)

    try:
        reports = run_cv(
            dataset,
            cost_profile,
            k=k,
            seed=seed,
            grid=grid,
            policies=names,
            calibration=calibration,
            max_terms=max_terms,
            true_probs=true_probs,
        )
    except (CorpusError, ProfileError, ValueError) as exc:
        _fail(str(exc))

    out_dir = Path(out)
    save_reports(reports, out_dir)
    export_pareto_csv(reports, out_dir / "pareto.csv")
    click.echo(f"{'policy':<20} {'accuracy %':>10} {'avg cost':>9}")
    for name in names:
        rep = reports[name]
        click.echo(f"{name:<20} {100 * rep.accuracy:>10.1f} {rep.avg_cost:>9.1f}")
    click.echo(f"reports written to {out_dir}")


@main.command("costs")
@click.option("--profile", default="edge-cloud", show_default=True)
def cmd_costs(profile) -> None:
    """Print the normalized acquisition-cost table for a profile."""
    try:
        cost_profile = load_profile(profile)
        costs = normalized_costs(cost_profile)
    except ProfileError as exc:
        _fail(str(exc))
    click.echo(f"{'fidelity':<12} {'cost':>7}")
    for fid in cost_profile.level_ids:
        click.echo(f"{fid:<12} {costs[fid]:>7.1f}")


@main.command("pareto")
@click.option("--reports", "reports_dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Directory of report_<policy>.json files from eval.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def cmd_pareto(reports_dir, out) -> None:
    """Recompute the Pareto frontier CSV from saved eval reports."""
    reports: dict[str, EvalReport] = {}
    for path in sorted(Path(reports_dir).glob("report_*.json")):
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        name = path.stem[len("report_"):]
        reports[name] = EvalReport(
            accuracy=obj["accuracy"],
            avg_cost=obj["avg_cost"],
            brier=obj["brier"],
            brier_selected=obj["brier_selected"],
            fidelity_distribution=obj["fidelity_distribution"],
        )
    if not reports:
        _fail(f"no report_*.json files in {reports_dir}")
    export_pareto_csv(reports, out)
    click.echo(f"wrote {out} ({len(reports)} policies)")


if __name__ == "__main__":
    sys.exit(main())
