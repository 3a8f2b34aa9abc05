"""Time the numerical kernels on every available backend.

Runs the LSTM forward/backward passes and the HMM forward-backward
smoother for each entry in ``crosstalk.kernels.BACKENDS`` and prints a
comparison table. Sizes default to the shapes the pipeline actually uses
(2 s training chunks for the LSTM, a few minutes of frames for the HMM).
"""

import argparse
import time

import numpy as np

from crosstalk.kernels import BACKENDS, active_backend


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--frames", type=int, default=198,
                        help="LSTM sequence length (default 198, one chunk)")
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--units", type=int, default=128,
                        help="recurrent units per direction")
    parser.add_argument("--states", type=int, default=4,
                        help="HMM speaker count")
    parser.add_argument("--hmm-frames", type=int, default=30000,
                        help="HMM chain length (default 30000, five minutes)")
    parser.add_argument("--repeats", type=int, default=5,
                        help="best-of-N timing")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    T, B, H = args.frames, args.batch, args.units
    xg = rng.standard_normal((T, B, 4 * H))
    U = rng.standard_normal((H, 4 * H)) / np.sqrt(H)
    dh = rng.standard_normal((T, B, H))
    loglik = rng.normal(0.0, 2.0, size=(args.hmm_frames, args.states))

    print(f"active backend: {active_backend()}")
    print(f"lstm: T={T} B={B} H={H}   hmm: T={args.hmm_frames} S={args.states}")
    print()

    timings = {}
    outputs = {}
    for name, (fwd, bwd, fb) in BACKENDS.items():
        t_fwd, (h, c, gates) = _time(lambda: fwd(xg, U), args.repeats)
        t_bwd, grads = _time(lambda: bwd(dh, h, c, gates, U), args.repeats)
        t_fb, smooth = _time(lambda: fb(loglik, 0.95), args.repeats)
        timings[name] = {"lstm_forward": t_fwd, "lstm_backward": t_bwd,
                         "hmm_forward_backward": t_fb}
        outputs[name] = {"lstm_forward": h, "lstm_backward": grads[0],
                         "hmm_forward_backward": smooth[0]}

    names = list(BACKENDS)
    header = f"{'kernel':<22}" + "".join(f"{n + ' (ms)':>16}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}{'max |diff|':>12}"
    print(header)
    print("-" * len(header))
    for kernel in ("lstm_forward", "lstm_backward", "hmm_forward_backward"):
        row = f"{kernel:<22}"
        for n in names:
            row += f"{1e3 * timings[n][kernel]:>16.2f}"
        if len(names) == 2:
            a, b = names
            row += f"{timings[a][kernel] / timings[b][kernel]:>9.1f}x"
            diff = np.abs(outputs[a][kernel] - outputs[b][kernel]).max()
            row += f"{diff:>12.1e}"
        print(row)
    if len(names) == 1:
        print("\ncompiled extension not built; only the numpy backend ran")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
