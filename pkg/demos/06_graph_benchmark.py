"""Time the neighborhood sub-layer on kNN graphs against complete graphs.
Edge counts grow as N*k versus N*(N-1), and wall time follows.

Run:  python3 demos/06_graph_benchmark.py
"""

from seqstruct import evaluate as ev


def main():
    report = ev.bench_graphs(sizes=(50, 100, 200, 400), k=30, width=32, repetitions=5)
    print(ev.bench_report_text(report))

    print("\nspeedup (complete graph time / kNN time):")
    by_n = {}
    for entry in report.entries:
        by_n.setdefault(entry["n"], {})[entry["mode"]] = entry["median_seconds"]
    for n, modes in sorted(by_n.items()):
        print(f"  N={n:4d}  x{modes['full'] / modes['knn']:.2f}")


if __name__ == "__main__":
    main()
