"""``sbp-wavelab`` command line client.

Requests go to the service in-process unless ``--url`` points at a running
server.  Settings come from built-in defaults, then the ``--config`` file
(``key=value`` lines), then explicit flags.  The exit code is 1 when any
acceptance check fails and 2 on usage or request errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import httpx

from .harness import write_csv

LIST_KEYS = {"cases", "sizes"}


def read_config(path: str | Path) -> dict[str, object]:
    """Parse ``key=value`` lines; ``#`` starts a comment and dashes in keys become underscores."""
    out: dict[str, object] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = [v for v in value.replace(",", " ").split()] if key in LIST_KEYS else value
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sbp-wavelab", description=__doc__.splitlines()[0])
    p.add_argument("--out", metavar="DIR", help="write result rows as CSV into DIR")
    p.add_argument("--config", metavar="FILE", help="key=value overrides")
    p.add_argument("--url", help="base URL of a running service (default: in-process)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("verify-operators", help="operator certificates")
    s.add_argument("--variant", choices=["all", "gp", "sat", "gp-removed", "sat-added"])
    s.add_argument("--n", type=int)
    s.add_argument("--samples", type=int)

    s = sub.add_parser("cfl-probe", help="stability thresholds by bisection")
    s.add_argument("--case", dest="cases", action="append", help="probe name (repeatable); default all")
    s.add_argument("--full", action="store_true", default=None)
    s.add_argument("--n2d", type=int)
    s.add_argument("--T2d", type=float)

    s = sub.add_parser("converge", help="convergence table")
    s.add_argument("--case", choices=["snell", "smooth"])
    s.add_argument("--method", choices=["gp-improved", "gp-original", "sat3", "int6"])
    s.add_argument("--levels", type=int)
    s.add_argument("--full", action="store_true", default=None)
    s.add_argument("--T", type=float)
    s.add_argument("--ratio", type=float)
    s.add_argument("--tau-margin", dest="tau_margin", type=float)

    s = sub.add_parser("energy-longtime", help="long-time run and energy checks")
    s.add_argument("--T", type=float)
    s.add_argument("--n", type=int)
    s.add_argument("--ratio", type=float)
    s.add_argument("--method", choices=["gp-improved", "gp-original", "sat3", "int6"])

    s = sub.add_parser("cond-study", help="ghost-system conditioning")
    s.add_argument("--sizes", type=int, nargs="+")
    return p


_GLOBAL = {"out", "config", "url", "verbose", "command"}


def _payload(args: argparse.Namespace) -> dict[str, object]:
    payload: dict[str, object] = {}
    if args.config:
        payload.update(read_config(args.config))
    payload.update({k: v for k, v in vars(args).items() if k not in _GLOBAL and v is not None})
    return payload


def _client(url: str | None):
    if url:
        return httpx.Client(base_url=url, timeout=None)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app())


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    logging.getLogger("httpx").setLevel(logging.WARNING)
    try:
        payload = _payload(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    with _client(args.url) as client:
        resp = client.post(f"/{args.command}", json=payload)
    if resp.status_code != 200:
        print(f"error: {resp.status_code} {resp.text}", file=sys.stderr)
        return 2
    report = resp.json()
    for c in report["checks"]:
        mark = "PASS" if c["passed"] else "FAIL"
        print(f"[{mark}] {c['criterion']:>2} {c['name']}: {c['detail']}")
    if args.out:
        path = write_csv(report["rows"], Path(args.out) / f"{report['table']}.csv")
        print(f"wrote {path}")
    failed = sum(not c["passed"] for c in report["checks"])
    print(f"{len(report['checks']) - failed} passed, {failed} failed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
