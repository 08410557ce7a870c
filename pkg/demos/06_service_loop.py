"""Run the HTTP service in-process and walk the enroll/train/authenticate loop.

The server persists enrollments, models, and an audit log under a store
directory; authentication responses carry the verdict, the decision value,
and a short-lived link to the rendered marker image.
"""

import json
import socket
import threading
import urllib.request
from pathlib import Path

import uvicorn

from keydyn import generate_cohort
from keydyn.events import sample_to_dict
from keydyn.service import ServiceConfig, create_app

out_dir = Path(__file__).parent / "output"
store = out_dir / "service_store"
cohort = generate_cohort(n_users=2, genuine_per_user=80, imposter_per_user=10,
                         separation=4.0, seed=5)

app = create_app(store, config=ServiceConfig(augment=200, epochs=10,
                                             batch_size=32, seed=0))
sock = socket.socket()
sock.bind(("127.0.0.1", 0))
port = sock.getsockname()[1]
server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
thread = threading.Thread(target=server.run, kwargs={"sockets": [sock]},
                          daemon=True)
thread.start()
base = f"http://127.0.0.1:{port}/api/v1"
print(f"service listening on port {port}, store at {store}")


def call(method, path, payload=None):
    data = json.dumps(payload).encode() if payload is not None else None
    req = urllib.request.Request(f"{base}{path}", data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req) as resp:
        body = resp.read()
        return json.loads(body) if resp.headers.get("Content-Type", "").startswith(
            "application/json") else body


while True:
    try:
        call("GET", "/health")
        break
    except OSError:
        pass

enrolled = call("POST", "/users/alice/samples", {
    "samples": [sample_to_dict(s) for s in cohort.genuine["user00"][:60]]})
print(f"enrolled {enrolled['sample_count']} samples for alice")

summary = call("POST", "/users/alice/train")
print(f"trained: validation EER {summary['val_eer']:.3f}, "
      f"threshold {summary['threshold']:.4f}, "
      f"negatives from {summary['imposter_source']}")

genuine = sample_to_dict(cohort.genuine["user00"][60])
verdict = call("POST", "/users/alice/authenticate", genuine)
print(f"genuine attempt:  f(x) = {verdict['decision_value']:+.4f} "
      f"-> {verdict['verdict']}")

png = call("GET", f"/users/alice/preview/{verdict['image_id']}")
preview_path = out_dir / "attempt_preview.png"
preview_path.write_bytes(png)
print(f"preview image ({len(png)} bytes) -> {preview_path}")

foreign = sample_to_dict(cohort.imposter["user00"][0])
verdict = call("POST", "/users/alice/authenticate", foreign)
print(f"imposter attempt: f(x) = {verdict['decision_value']:+.4f} "
      f"-> {verdict['verdict']}")

audit = (store / "audit.jsonl").read_text().strip().splitlines()
last = json.loads(audit[-1])
print(f"audit log has {len(audit)} rows; last: action={last['action']} "
      f"outcome={last['outcome']} severity={last['severity']}")

server.should_exit = True
thread.join(timeout=5)
