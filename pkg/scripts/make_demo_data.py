#!/usr/bin/env python3
"""Generate a synthetic demo workspace: market CSV plus news-style docs.

The market is a seeded geometric random walk on weekday dates; the docs are
lexicon-toned snippets whose polarity loosely anticipates the next day's
return direction, timestamped the calendar day before each bar so alignment
exercises the publish-before-trade rule.

Usage:
    python3 scripts/make_demo_data.py --out demo_data --days 160
    sentirisk prepare --data-dir demo_data
"""

from __future__ import annotations

import argparse
from pathlib import Path

from sentirisk.synthetic import (
    make_demo_docs,
    make_demo_market,
    write_docs_jsonl,
    write_market_csv,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("demo_data"),
                    help="output directory (default: demo_data)")
    ap.add_argument("--days", type=int, default=160,
                    help="number of trading days (default: 160)")
    ap.add_argument("--market-seed", type=int, default=3)
    ap.add_argument("--docs-seed", type=int, default=4)
    ap.add_argument("--docs-per-day", type=float, default=2.0,
                    help="mean documents per trading day (default: 2.0)")
    args = ap.parse_args()

    bars = make_demo_market(n_days=args.days, seed=args.market_seed)
    docs = make_demo_docs(bars, seed=args.docs_seed,
                          mean_docs_per_day=args.docs_per_day)

    args.out.mkdir(parents=True, exist_ok=True)
    market_path = args.out / "market.csv"
    docs_path = args.out / "texts.jsonl"
    write_market_csv(bars, market_path)
    write_docs_jsonl(docs, docs_path)
    print(f"wrote {len(bars)} bars -> {market_path}")
    print(f"wrote {len(docs)} docs -> {docs_path}")


if __name__ == "__main__":
    main()
