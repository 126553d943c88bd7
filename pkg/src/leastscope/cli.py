"""Command-line interface.

Commands:
  build     scope map -> byte-stable permission forest document
  stats     hierarchy shape summary (node count, heights, multipath)
  solve     minimal additional nodes for a method list
  audit     connector overprivilege report
  simulate  persona confirmation-effort curves

Every command takes --format text|machine; machine output is one JSON
document on stdout and errors go to stderr as JSON with a stable code.
The LEASTSCOPE_HOME environment variable picks the default output home
(defaults to ~/.leastscope).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .audit import audit_scopes, load_connector
from .errors import ConfigurationError, LeastScopeError
from .scopes import (
    PermissionForest,
    ScopeMap,
    build_forest,
    compute_stats,
    dump_forest,
    load_forest,
    load_scope_map,
)
from .simulate import MODES, generate_sequence, load_profile, run_personas, write_curves
from .solver import solve_plan


def leastscope_home() -> Path:
    return Path(os.environ.get("LEASTSCOPE_HOME", Path.home() / ".leastscope"))


def _split_csv(value: str | None) -> list[str]:
    if not value:
        return []
    return [item.strip() for item in value.split(",") if item.strip()]


def _load_inputs(args) -> tuple[ScopeMap | None, PermissionForest]:
    """Resolve --scope-map / --forest into a forest (and map when given)."""
    if args.scope_map:
        scope_map = load_scope_map(args.scope_map)
        return scope_map, build_forest(scope_map)
    if getattr(args, "forest", None):
        return None, load_forest(args.forest)
    raise ConfigurationError("provide --scope-map or --forest")


def _emit(args, machine_payload: dict, text_lines: list[str]) -> None:
    if args.format == "machine":
        print(json.dumps({"schema_version": 1, **machine_payload}, indent=2, sort_keys=True))
    else:
        for line in text_lines:
            print(line)


def _cmd_build(args) -> int:
    scope_map = load_scope_map(args.scope_map)
    document = dump_forest(build_forest(scope_map))
    if args.out:
        Path(args.out).write_text(document, encoding="utf-8")
        _emit(
            args,
            {"written": str(args.out), "app": scope_map.app_id},
            [f"wrote forest for {scope_map.app_id!r} to {args.out}"],
        )
    else:
        sys.stdout.write(document)
    return 0


def _cmd_stats(args) -> int:
    _, forest = _load_inputs(args)
    stats = compute_stats(forest)
    _emit(
        args,
        {"app": forest.app_id, "stats": stats.to_dict()},
        [
            f"app:                    {forest.app_id}",
            f"nodes:                  {stats.node_count}",
            f"max height:             {stats.max_height}",
            f"avg height:             {float(stats.avg_height):g}",
            f"multipath methods:      {stats.multipath_method_count}",
        ],
    )
    return 0


def _cmd_solve(args) -> int:
    _, forest = _load_inputs(args)
    methods = _split_csv(args.methods)
    if not methods:
        raise ConfigurationError("--methods needs at least one method")
    granted = frozenset(_split_csv(args.granted))
    solution = solve_plan(forest, methods, granted)
    _emit(
        args,
        {"app": forest.app_id, "solution": solution.to_dict()},
        [
            f"app:       {forest.app_id}",
            f"methods:   {', '.join(methods)}",
            f"granted:   {', '.join(sorted(granted)) or '(none)'}",
            f"delta:     {', '.join(sorted(solution.delta)) or '(none)'}",
            f"selected:  {', '.join(solution.sorted_selected())}",
            f"objective: {solution.objective}",
        ],
    )
    return 0


def _cmd_audit(args) -> int:
    _, forest = _load_inputs(args)
    if args.connector:
        manifest = load_connector(args.connector)
        if manifest["app"] != forest.app_id:
            raise ConfigurationError(
                f"manifest targets app {manifest['app']!r}, forest is {forest.app_id!r}"
            )
        tool_methods = manifest["tool_methods"]
        requested = manifest["requested_scopes"]
        connector = manifest["connector"]
    else:
        tool_methods = _split_csv(args.methods)
        requested = _split_csv(args.requested)
        connector = args.name
        if not tool_methods or not requested:
            raise ConfigurationError("audit needs --methods and --requested (or --connector)")
    report = audit_scopes(forest, tool_methods, requested, connector=connector)
    _emit(
        args,
        {"report": report.to_dict()},
        [
            f"connector: {report.connector or '(unnamed)'}",
            f"app:       {report.app_id}",
            f"requested: {', '.join(report.requested_scopes)}"
            f" ({report.requested_method_count} methods)",
            f"minimal:   {', '.join(report.minimal_nodes)}"
            f" ({report.minimal_method_count} methods)",
            f"ratio:     {report.ratio_text()}",
            f"verdict:   {report.verdict}",
        ],
    )
    return 0


def _cmd_simulate(args) -> int:
    profile = load_profile(args.profile)
    seeds = [int(s) for s in _split_csv(args.seeds)] or [1]
    personas = _split_csv(args.personas) or ["always-always", "always-once", "readonly-always"]
    modes = tuple(_split_csv(args.modes) or MODES)
    if args.scope_map:
        scope_map = load_scope_map(args.scope_map)
    else:
        from .fixtures import fixture_scope_map

        scope_map = fixture_scope_map(profile.app_id)
    out_dir = Path(args.out) if args.out else leastscope_home() / "curves"
    curves = []
    for seed in seeds:
        sequence = generate_sequence(seed, profile)
        run = run_personas(sequence, list(personas), scope_map, modes=modes, seed=seed)
        curves.extend(run.values())
    paths = write_curves(out_dir, curves)
    totals = [
        {"persona": c.persona, "mode": c.mode, "seed": c.seed, "total": c.total}
        for c in sorted(curves, key=lambda c: (c.persona, c.mode, c.seed))
    ]
    _emit(
        args,
        {
            "profile": profile.name,
            "table": str(paths["table"]),
            "json": str(paths["json"]),
            "totals": totals,
        },
        [f"profile: {profile.name}", f"table:   {paths['table']}"]
        + [
            f"  {t['persona']:>16} {t['mode']:>10} seed={t['seed']} total={t['total']}"
            for t in totals
        ],
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leastscope",
        description="Least-privilege permission tooling for tool-calling agents.",
        epilog="LEASTSCOPE_HOME selects the default output home (~/.leastscope).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, forest_input=True):
        p.add_argument("--scope-map", help="path to a scope-map document")
        if forest_input:
            p.add_argument("--forest", help="path to a prebuilt forest document")
        p.add_argument(
            "--format", choices=("text", "machine"), default="text", help="output format"
        )

    p_build = sub.add_parser("build", help="build a permission forest from a scope map")
    p_build.add_argument("--scope-map", required=True)
    p_build.add_argument("--out", help="write the forest document here instead of stdout")
    p_build.add_argument("--format", choices=("text", "machine"), default="text")
    p_build.set_defaults(fn=_cmd_build)

    p_stats = sub.add_parser("stats", help="hierarchy shape summary")
    add_common(p_stats)
    p_stats.set_defaults(fn=_cmd_stats)

    p_solve = sub.add_parser("solve", help="minimal additional nodes for methods")
    add_common(p_solve)
    p_solve.add_argument("--methods", help="comma-separated method names")
    p_solve.add_argument("--granted", help="comma-separated already-granted node ids")
    p_solve.set_defaults(fn=_cmd_solve)

    p_audit = sub.add_parser("audit", help="connector overprivilege report")
    add_common(p_audit)
    p_audit.add_argument("--connector", help="connector manifest path or bundled name")
    p_audit.add_argument("--methods", help="comma-separated tool methods")
    p_audit.add_argument("--requested", help="comma-separated requested scope names")
    p_audit.add_argument("--name", default="", help="connector name for the report")
    p_audit.set_defaults(fn=_cmd_audit)

    p_sim = sub.add_parser("simulate", help="persona confirmation-effort curves")
    p_sim.add_argument("--profile", required=True, help="bundled profile name or path")
    p_sim.add_argument("--seeds", help="comma-separated integer seeds (default 1)")
    p_sim.add_argument("--personas", help="comma-separated persona names")
    p_sim.add_argument("--modes", help="comma-separated modes (HIERARCHY,PER_METHOD)")
    p_sim.add_argument("--scope-map", help="scope map to simulate against (default: bundled)")
    p_sim.add_argument("--out", help="output directory (default: $LEASTSCOPE_HOME/curves)")
    p_sim.add_argument("--format", choices=("text", "machine"), default="text")
    p_sim.set_defaults(fn=_cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except LeastScopeError as exc:
        payload = {"schema_version": 1, **exc.to_dict()}
        if args.format == "machine":
            print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
