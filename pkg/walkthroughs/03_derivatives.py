"""Symbolic derivatives, checked against a central difference."""
import math
import textwrap

from formulac import REAL, compile_formula, pretty_print


def main() -> None:
    for text in ("sin(t^2)", "t^3 + 2*t", "exp(-t) * cos(3*t)", "log(1 + t^2)"):
        d = compile_formula(text, {"t": REAL}, derive="t")
        f = compile_formula(text, {"t": REAL})
        print(f"d/dt {text} = {pretty_print(d.outputs[0][1])}")
        print(textwrap.indent(d.source().rstrip(), "    "))
        for t in (0.3, 1.0, 2.0):
            h = 1e-6
            fd = (f.run({"t": t + h})["result"] - f.run({"t": t - h})["result"]) / (2 * h)
            print(f"    t={t}: symbolic {d.run({'t': t})['result']:.12f}  central {fd:.12f}")

    # the chain rule gives 2t cos(t^2)
    d = compile_formula("D(sin(t^2), t)", {"t": REAL})
    print("D(sin(t^2), t) at 1.0:", d.run({"t": 1.0})["result"], "vs", 2 * math.cos(1.0))


if __name__ == "__main__":
    main()
