"""Unroll a 4x4 matrix product into straight-line code and run it."""
import numpy as np

from formulac import Op, compile_project

SOURCE = """\
input a: matrix[4,4]
input b: matrix[4,4]
output c = a * b
"""


def main() -> None:
    c = compile_project(SOURCE)

    # 16 assignments, one per entry; no loops survive lowering
    print(c.source())
    t = c.raw_tape
    print(f"{t.count(Op.MUL)} multiplies + {t.count(Op.ADD)} adds = {t.arithmetic_count}")

    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
    got = c.run({"a": a, "b": b})["c"]
    print("max deviation from numpy:", np.max(np.abs(got - a @ b)))


if __name__ == "__main__":
    main()
