"""Command-line entry points for the audit campaigns.

Each subcommand runs one experiment kind.  Settings come from an optional
JSON config file holding one top-level object per experiment, overridden
by --seed / --out / --trials.  Exit codes: 0 success, 1 I/O failure,
2 invariant or configuration failure.
"""

from __future__ import annotations

import sys

import click

from .errors import AuditError
from .harness import config_from_mapping, load_config_file, run

_SUBCOMMANDS = {
    "sw2-rate": ("sw2_rate", "Sliced-W2 decay rates across sample sizes."),
    "dkw-scan": ("dkw_scan", "Scale-sensitive empirical-CDF deviation scans."),
    "witness": ("lower_bound_witness", "Two-point lower-bound witness frequencies."),
    "dm": ("dm_oscillation", "Embedding oscillation at the desk-scale regime."),
    "hstat": ("h_statistics", "Top-subset matrix norms across sample sizes."),
}


@click.group()
def main() -> None:
    """Empirical audits with seeded, reproducible CSV output."""


def _register(name: str, kind: str, help_text: str) -> None:
    @main.command(name=name, help=help_text)
    @click.option(
        "--config",
        "config_path",
        type=click.Path(exists=True, dir_okay=False),
        default=None,
        help="JSON file with one top-level object per experiment.",
    )
    @click.option("--seed", type=int, default=None, help="Master seed override.")
    @click.option(
        "--out",
        "out_dir",
        type=click.Path(file_okay=False),
        default=None,
        help="Output directory override.",
    )
    @click.option("--trials", type=int, default=None, help="Trial-count override.")
    def command(config_path, seed, out_dir, trials, kind=kind):
        mapping = {}
        if config_path is not None:
            mapping = load_config_file(config_path).get(kind, {})
        try:
            cfg = config_from_mapping(
                kind, mapping, seed=seed, out_dir=out_dir, trials=trials
            )
        except AuditError as exc:
            click.echo(f"swaudit: {exc}", err=True)
            sys.exit(2)
        sys.exit(run(cfg))


for _name, (_kind, _help) in _SUBCOMMANDS.items():
    _register(_name, _kind, _help)


if __name__ == "__main__":
    main()
