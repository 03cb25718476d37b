"""Reference external-oracle adapter, runnable as a child process.

Speaks the line-delimited JSON protocol from the oracle module. The default
mode predicts one fixed label for every sample; "sum" mode predicts the byte
sum of each sample modulo a class count, which lets callers verify that
pixel payloads arrive intact. Run as:

    python -m shiftsearch.stub_oracle --label 3
"""

import argparse
import base64
import json
import sys
import time


def _predictions(mode, label, classes, payload, count):
    if mode == "fixed":
        return [label] * count
    per_sample = len(payload) // count
    return [
        int(sum(payload[i * per_sample : (i + 1) * per_sample]) % classes)
        for i in range(count)
    ]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--label", type=int, default=0, help="label for fixed mode")
    parser.add_argument("--mode", choices=["fixed", "sum"], default="fixed")
    parser.add_argument("--classes", type=int, default=10, help="modulus for sum mode")
    parser.add_argument("--concurrency-safe", action="store_true")
    # test hooks
    parser.add_argument("--respond-delay", type=float, default=0.0)
    parser.add_argument("--garble", action="store_true", help="answer with invalid JSON")
    parser.add_argument("--die-after", type=int, default=-1, help="exit after N requests")
    args = parser.parse_args(argv)

    print(
        json.dumps({"protocol": 1, "concurrency_safe": bool(args.concurrency_safe)}),
        flush=True,
    )
    handled = 0
    for line in sys.stdin:
        if not line.strip():
            continue
        if args.die_after >= 0 and handled >= args.die_after:
            return 0
        request = json.loads(line)
        if args.respond_delay > 0:
            time.sleep(args.respond_delay)
        if args.garble:
            print("this is not json", flush=True)
            handled += 1
            continue
        payload = base64.b64decode(request["pixels"])
        expected = request["count"] * request["height"] * request["width"] * 3
        if len(payload) != expected:
            print(
                json.dumps({"id": request["id"], "error": "pixel payload size mismatch"}),
                flush=True,
            )
            return 2
        preds = _predictions(args.mode, args.label, args.classes, payload, request["count"])
        print(json.dumps({"id": request["id"], "predictions": preds}), flush=True)
        handled += 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
