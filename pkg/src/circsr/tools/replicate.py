"""Reference external SR program: repeat every LR sample ``factor`` times.

Usage::

    python -m circsr.tools.replicate INPUT OUTPUT FACTOR [--drop-last]

INPUT and OUTPUT use the raw-with-sidecar record format. ``--drop-last``
deliberately writes one sample too few per channel, for exercising the
caller's dimension check.
"""

import argparse
import sys

import numpy as np

from circsr.signal import load_record, save_record


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("input")
    parser.add_argument("output")
    parser.add_argument("factor", type=int)
    parser.add_argument("--drop-last", action="store_true")
    args = parser.parse_args(argv)

    lr = load_record(args.input, "raw")
    data = np.repeat(lr.data, args.factor, axis=1)
    if args.drop_last:
        data = data[:, :-1]
    save_record(lr.with_data(data, sampling_rate_hz=lr.sampling_rate_hz * args.factor), args.output, "raw")
    return 0


if __name__ == "__main__":
    sys.exit(main())
