#!/usr/bin/env python3
"""Stand-in model process for protocol tests.

detect: returns the boxes listed for the image's file name in the JSON file
named by STUB_DETECTIONS (empty when unset or not listed).
classify: reads the crop's PNG header and calls it a rider with score 0.97
when it is at least as wide as it is tall, otherwise "not" with score 0.9.
"""
import json
import os
import struct
import sys

HELLO = {
    "name": "stub-adapter",
    "version": "0.1",
    "ops": ["hello", "detect", "classify"],
    "max_concurrent_sessions": 1,
}


def png_size(path):
    with open(path, "rb") as f:
        head = f.read(24)
    if head[:8] != b"\x89PNG\r\n\x1a\n":
        raise ValueError("not a PNG: " + path)
    return struct.unpack(">II", head[16:24])


def load_table():
    path = os.environ.get("STUB_DETECTIONS")
    if not path:
        return {}
    with open(path) as f:
        return json.load(f)


def handle(op, payload, table):
    if op == "hello":
        return HELLO
    if op == "detect":
        image = payload["image"]
        if not os.path.exists(image):
            raise FileNotFoundError(image)
        return {"detections": table.get(os.path.basename(image), [])}
    if op == "classify":
        w, h = png_size(payload["crop"])
        if w >= h:
            return {"label": "escooter_rider", "score": 0.97}
        return {"label": "not", "score": 0.9}
    raise ValueError("unknown op: " + str(op))


def main():
    table = load_table()
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            rid = req["id"]
        except Exception as e:  # malformed line: answer, keep serving
            resp = {"id": None, "ok": False, "error": "malformed request: %s" % e}
        else:
            try:
                resp = {"id": rid, "ok": True, "payload": handle(req.get("op"), req.get("payload") or {}, table)}
            except Exception as e:
                resp = {"id": rid, "ok": False, "error": str(e)}
        sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
