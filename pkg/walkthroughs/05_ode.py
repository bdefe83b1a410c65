"""RK4 over a compiled right-hand side, and why delta() is refused."""
import math

import numpy as np

from formulac.cli import shipped_project_dir
from formulac.demos import OdeSystem, integrate_rk4
from formulac.errors import DiscontinuityError

PROJECTS = shipped_project_dir()


def main() -> None:
    growth = (PROJECTS / "ode_exp.flc").read_text()
    prev = None
    for h in (0.02, 0.01, 0.005):
        err = abs(integrate_rk4(OdeSystem(growth, h, round(1 / h)), 1.0)[-1] - math.e)
        ratio = "" if prev is None else f"  (error ratio {prev / err:.2f})"
        print(f"x' = x, h = {h}: |x(1) - e| = {err:.3e}{ratio}")
        prev = err

    # a second-order equation rewritten as a first-order system
    pendulum = (PROJECTS / "pendulum.flc").read_text()
    params = {"g": 9.81, "c": 0.2, "e1": [1.0, 0.0], "e2": [0.0, 1.0]}
    traj = integrate_rk4(OdeSystem(pendulum, 0.01, 500, params), [1.0, 0.0])
    for k in range(0, 501, 100):
        print(f"t = {k * 0.01:4.1f}: angle {traj[k, 0]: .6f}, rate {traj[k, 1]: .6f}")
    print("energy decays:", bool(np.all(np.diff(0.5 * traj[:, 1] ** 2 - 9.81 * np.cos(traj[:, 0])) <= 1e-12)))

    kicked = (PROJECTS / "ode_delta.flc").read_text()
    try:
        integrate_rk4(OdeSystem(kicked, 0.01, 200), 1.0)
    except DiscontinuityError as exc:
        print("refused:", exc)


if __name__ == "__main__":
    main()
