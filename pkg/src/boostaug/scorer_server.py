"""Reference scorer speaking the line-delimited JSON protocol.

Run as ``python -m boostaug.scorer_server --script scores.json`` and point the
pipeline at it with ``--scorer 'exec:python3 -m boostaug.scorer_server --script scores.json'``.
The script maps text to a triple ``{"perplexity", "confidence", "label"}``;
texts it does not know get an ``{"error": ...}`` reply unless ``--default``
supplies a fallback triple. ``--malform`` makes every reply break the
protocol in one specific way, which is how client-side validation is tested.
``--http PORT`` serves the same bodies over HTTP POST instead of stdin/stdout.

:class:`RecordingFactory` wraps another scorer factory and keeps every triple
it hands out, per fold iteration, so a run can be replayed through this server.
"""

from __future__ import annotations

import argparse
import json
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

MALFORMATIONS = (
    "not_json", "missing_field", "id_mismatch", "bad_sum", "bad_perplexity",
    "wrong_length", "unknown_label", "label_not_argmax", "error", "silent",
)


def load_script(path: str) -> dict[str, dict]:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ValueError(f"script {path} must be a JSON object mapping text to a triple")
    return data


def _malform(kind: str, reply: dict, request: dict) -> str | None:
    r = dict(reply)
    if kind == "not_json":
        return "this is not json"
    if kind == "missing_field":
        r.pop("perplexity", None)
    elif kind == "id_mismatch":
        r["id"] = request.get("id", 0) + 1
    elif kind == "bad_sum":
        r["confidence"] = [c * 0.8 for c in r["confidence"]]
    elif kind == "bad_perplexity":
        r["perplexity"] = 0.5
    elif kind == "wrong_length":
        r["confidence"] = r["confidence"] + [0.0]
    elif kind == "unknown_label":
        r["label"] = "no-such-label"
    elif kind == "label_not_argmax":
        labels = request.get("labels") or []
        r["label"] = next((lab for lab in labels if lab != r["label"]), r["label"])
    elif kind == "error":
        return json.dumps({"id": request.get("id"), "error": "scripted failure"})
    elif kind == "silent":
        return None
    return json.dumps(r)


class ScriptedScorer:
    def __init__(self, script: dict[str, dict], default: dict | None = None, malform: str | None = None):
        if malform is not None and malform not in MALFORMATIONS:
            raise ValueError(f"unknown malformation {malform!r}; choose from {MALFORMATIONS}")
        self.script = script
        self.default = default
        self.malform = malform

    def reply(self, line: str) -> str | None:
        try:
            request = json.loads(line)
        except json.JSONDecodeError:
            return json.dumps({"id": None, "error": "request is not JSON"})
        triple = self.script.get(request.get("text"), self.default)
        if triple is None:
            return json.dumps({"id": request.get("id"), "error": f"unscripted text {request.get('text')!r}"})
        reply = {"id": request.get("id"), "perplexity": triple["perplexity"],
                 "confidence": list(triple["confidence"]), "label": triple["label"]}
        if self.malform:
            return _malform(self.malform, reply, request)
        return json.dumps(reply)


def serve_stdio(scorer: ScriptedScorer, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        out = scorer.reply(line)
        if out is None:
            continue
        stdout.write(out + "\n")
        stdout.flush()


def make_http_server(scorer: ScriptedScorer, port: int = 0, host: str = "127.0.0.1") -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            body = self.rfile.read(int(self.headers.get("Content-Length", 0))).decode("utf-8")
            out = scorer.reply(body)
            data = (out or "").encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):
            pass

    return ThreadingHTTPServer((host, port), Handler)


class _RecordingModel:
    def __init__(self, model, sink: dict):
        self._model = model
        self._sink = sink
        self.provenance = getattr(model, "provenance", {})

    def score(self, text, aspect=None):
        t = self._model.score(text, aspect)
        self._sink[text] = {"perplexity": t.perplexity, "confidence": list(t.confidence), "label": t.predicted_label}
        return t

    def close(self):
        self._model.close()


class RecordingFactory:
    """Scorer factory wrapper that records every triple per fold iteration.

    Proposals (``embed_sub``) are not forwarded, so record runs with the
    other backends.
    """

    def __init__(self, inner: Callable):
        self.inner = inner
        self.scripts: dict[int, dict[str, dict]] = {}

    def __call__(self, iteration, train, valid, seed, train_ids):
        model = self.inner(iteration, train, valid, seed, train_ids)
        return _RecordingModel(model, self.scripts.setdefault(iteration, {}))

    def dump(self, path_template: str) -> list[str]:
        """Write one script per iteration; ``{fold}`` in the template is the iteration."""
        paths = []
        for i, script in sorted(self.scripts.items()):
            p = path_template.replace("{fold}", str(i))
            with open(p, "w", encoding="utf-8") as f:
                json.dump(script, f, sort_keys=True)
            paths.append(p)
        return paths


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="boostaug.scorer_server", description=__doc__.split("\n\n")[0])
    ap.add_argument("--script", help="JSON object mapping text to {perplexity, confidence, label}")
    ap.add_argument("--default", help="JSON triple returned for texts missing from the script")
    ap.add_argument("--malform", choices=MALFORMATIONS, help="break every reply in this way")
    ap.add_argument("--http", type=int, metavar="PORT", help="serve over HTTP on this port (0 picks one)")
    args = ap.parse_args(argv)
    script = load_script(args.script) if args.script else {}
    default = json.loads(args.default) if args.default else None
    scorer = ScriptedScorer(script, default, args.malform)
    if args.http is None:
        serve_stdio(scorer)
        return 0
    server = make_http_server(scorer, args.http)
    print(f"http://127.0.0.1:{server.server_address[1]}/", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
