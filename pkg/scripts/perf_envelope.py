"""Time and peak memory of graph + response + selection on a large synthetic field.

    python scripts/perf_envelope.py --n 1000000 [--json out.json]
"""
import argparse
import json
import resource
import sys
import time

from splatprune.graph import build_graph
from splatprune.spectral import band_limited_select, response_magnitudes
from splatprune.synth import SynthSpec, synth_field


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--k", type=float, default=0.1)
    ap.add_argument("--gamma", type=float, default=0.5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)

    cluster = args.n // 10
    field = synth_field(SynthSpec(plane=args.n - cluster, cluster=cluster, extent=4.0 * (args.n / 20_000) ** 0.5))
    t0 = time.perf_counter()
    g = build_graph(field)
    t1 = time.perf_counter()
    resp = response_magnitudes(g, field.centers)
    t2 = time.perf_counter()
    sel = band_limited_select(resp, args.k, args.gamma)
    t3 = time.perf_counter()
    out = {
        "n": len(field),
        "edges": g.edge_count,
        "tau": g.tau,
        "sigma": g.sigma,
        "spectral_norm": g.spectral_norm,
        "kept": len(sel.kept),
        "seconds": {"graph": t1 - t0, "response": t2 - t1, "select": t3 - t2, "total": t3 - t0},
        "peak_rss_bytes": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024,
    }
    text = json.dumps(out, indent=2)
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(text)
    print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
