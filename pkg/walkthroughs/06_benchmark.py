"""Tape VM against the tree-walking interpreter.

Usage: python 06_benchmark.py [iterations]
"""
import sys

from formulac.cli import shipped_project_dir
from formulac.demos import bench_compare


def main() -> None:
    iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 100_000
    for name in ("sum4", "matmul4", "kalman"):
        text = (shipped_project_dir() / f"{name}.flc").read_text()
        report = bench_compare(text, iterations, name=name)
        print(report.to_json())


if __name__ == "__main__":
    main()
