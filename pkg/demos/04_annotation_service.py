"""Walkthrough: the interactive annotation service, driven over HTTP.

Starts the service in a background thread on a free port, then plays the
expert loop with plain stdlib HTTP calls: open a session, send a box prompt,
inspect the three scored proposals, commit the best one, and watch the
budget progress flip.

Run:  python3 demos/04_annotation_service.py
"""

import json
import socket
import threading
import time
import urllib.request
from pathlib import Path

import numpy as np
import uvicorn

from distillseg.data import generate_synthetic_corpus, sample_gt
from distillseg.encoder import EncoderGateway, ToyPitAdapter
from distillseg.metrics import image_iou
from distillseg.prompts import AnnotationLog, box_prompt_from_mask
from distillseg.rle import decode_rle
from distillseg.service import create_app

OUT = Path(__file__).parent / "out"


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _call(method, url, body=None, headers=None):
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(url, data=data, method=method,
                                 headers={"Content-Type": "application/json",
                                          **(headers or {})})
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


def main():
    OUT.mkdir(exist_ok=True)
    manifest = generate_synthetic_corpus(8, seed=3, size=128,
                                         out_dir=OUT / "corpus_demo4")
    gateway = EncoderGateway(adapter=ToyPitAdapter(seed=0))
    log = AnnotationLog(OUT / "annotations_demo4")
    app = create_app(manifest, gateway, log, budgets=(5, 10))

    port = _free_port()
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port,
                                           log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        time.sleep(0.05)
    base = f"http://127.0.0.1:{port}"
    print(f"service up at {base}")

    for i, sample in enumerate(manifest.samples[:5]):
        session = _call("POST", f"{base}/sessions", {"sample_id": sample.id})
        gt = sample_gt(sample)
        box = box_prompt_from_mask(gt).box  # the expert's drawn box
        body = _call("POST", f"{base}/sessions/{session['session_id']}/prompts",
                     {"kind": "box", "box": list(box)})
        scores = [p["predicted_iou"] for p in body["proposals"]]
        committed = _call("POST",
                          f"{base}/sessions/{session['session_id']}/commit",
                          {"proposal_index": 0, "nonce": f"demo-{i}"},
                          headers={"X-Annotator": "demo-expert"})
        accepted = decode_rle(committed["rle"])
        print(f"{sample.id}: proposal scores {[f'{s:.2f}' for s in scores]}, "
              f"committed IoU vs GT {image_iou(accepted, gt):.3f}")

    progress = _call("GET", f"{base}/progress")
    print(f"progress: {progress}")
    print(f"annotation log: {log.log_path} "
          f"({len(log.records())} records, replayable)")

    server.should_exit = True
    thread.join(timeout=5)


if __name__ == "__main__":
    main()
