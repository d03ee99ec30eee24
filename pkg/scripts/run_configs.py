"""Run every document in configs/ through the CLI subcommands it supports."""
import json
import sys
from pathlib import Path

from wassaction.cli import main

ROOT = Path(__file__).resolve().parents[1]
PLAN = {
    "harmonic.json": ["value", "dp-check", "euler-poisson", "viscosity-probe"],
    "cubic.json": ["classical-u", "value", "euler-poisson"],
    "linear_hopf_lax.json": ["hopf-lax", "value"],
    "interaction.json": ["value"],
}


def run(args):
    out = ROOT / "results" / f"{Path(args[2]).stem}-{args[0]}.json"
    out.parent.mkdir(exist_ok=True)
    code = main(args + ["--out", str(out)])
    return code, out


if __name__ == "__main__":
    failed = 0
    for name, commands in PLAN.items():
        for cmd in commands:
            code, out = run([cmd, "--spec", str(ROOT / "configs" / name)])
            summary = ""
            if code == 0:
                data = json.loads(out.read_text())
                summary = ", ".join(f"{k}={data[k]:.6g}" for k in ("value", "residual", "distance")
                                    if isinstance(data.get(k), float))
            print(f"{name:22s} {cmd:16s} exit={code} {summary}")
            failed += code != 0
    sys.exit(1 if failed else 0)
