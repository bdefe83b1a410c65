"""The same `+` means different code depending on operand types."""
import numpy as np

from formulac import REAL, compile_formula, matrix, vector


def show(text, **inputs):
    c = compile_formula(text, inputs)
    types = ", ".join(f"{k}: {v}" for k, v in inputs.items())
    print(f"--- {text}   with {types}   -> {c.outputs[0][1].ty}")
    print(c.source())
    return c


def main() -> None:
    show("a + b", a=REAL, b=vector(3))
    show("a + b", a=vector(3), b=vector(3))
    show("sum(a)", a=vector(4))
    show("sin(a)", a=matrix(2, 2))

    # a quadratic form stays a 1x1 matrix; sum() reads the value back out
    q = show("f^T * a * f", f=vector(2), a=matrix(2, 2))
    print(q.run({"f": [1.0, 1.0], "a": np.eye(2)}))

    # transposition only re-labels slots
    t = show("a^T", a=matrix(2, 3))
    print(f"instructions for a^T: {len(t.tape.instrs)}")


if __name__ == "__main__":
    main()
