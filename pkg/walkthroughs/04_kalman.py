"""Covariance predict and information-form update, compiled to tapes."""
import numpy as np

from formulac.demos import KalmanModel, build_kalman_step, random_kalman_model


def main() -> None:
    # scalar model small enough to check by hand
    step = build_kalman_step(KalmanModel([[1.0]], [[0.1]], [[1.0]], [[1.0]]))
    x, P, P_pred = step.step([0.0], [[0.9]], [0.3])
    print(f"scalar: predicted {P_pred[0, 0]}, updated {P[0, 0]}, state {x[0]}")

    print(step.model.update_source())

    rng = np.random.default_rng(42)
    model = random_kalman_model(4, 2, rng)
    step = build_kalman_step(model)
    print(f"4-state model: predict {len(step.predict.tape.instrs)} instructions, "
          f"update {len(step.update.tape.instrs)} instructions")

    x, P = np.zeros(4), np.eye(4)
    truth = rng.normal(size=4)
    for k in range(50):
        truth = model.F @ truth + rng.multivariate_normal(np.zeros(4), model.Q)
        z = model.H @ truth + rng.multivariate_normal(np.zeros(2), model.R)
        x, P, _ = step.step(x, P, z)
        if k % 10 == 9:
            print(f"step {k + 1:3d}: trace(P) = {np.trace(P):.6f}, "
                  f"asymmetry = {np.max(np.abs(P - P.T)):.1e}")


if __name__ == "__main__":
    main()
