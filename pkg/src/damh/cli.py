"""Command-line client.

Every verb resolves a :class:`~damh.config.RunConfig` (config file first,
flags override) and either runs the shared handlers in-process or, with
``--server URL``, posts the same request to a running service.

Exit status: 0 success, 2 configuration error, 3 data error, 4 numerical
error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields

from .config import RunConfig, from_mapping, load_config
from .errors import ConfigError, DamhError

VERBS = ("simulate", "learn", "filter", "sweep", "oracle", "diagnose")
GLOBAL_KEYS = ("seed", "threads", "out")


def _add_config_flags(p):
    g = p.add_argument_group("run configuration (any config-file key)")
    for f in fields(RunConfig):
        if f.name in GLOBAL_KEYS:
            continue
        g.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None, metavar="V")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="flat key = value config file")
    common.add_argument("--seed", default=None)
    common.add_argument("--threads", default=None)
    common.add_argument("--out", default=None, help="main output path (default stdout)")
    common.add_argument("--server", default=None, help="service URL; run remotely")
    parser = argparse.ArgumentParser(prog="damh", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb, parents=[common])
        _add_config_flags(p)
    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def resolve_config(args):
    overrides = {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config:
        return load_config(args.config, overrides)
    return from_mapping(overrides)


def _read(path, what):
    if path is None:
        return None
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}") from None


def _write(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w") as fh:
        fh.write(text)


def _request(cfg, verb):
    req = {"config": {k: v for k, v in cfg.resolved().items() if v is not None}}
    if verb in ("learn", "filter", "sweep"):
        req["series_csv"] = _read(cfg.input, "input")
    if verb in ("filter", "sweep"):
        req["surrogate"] = _read(cfg.surrogate, "surrogate")
    if verb == "diagnose":
        req["chain_csv"] = _read(cfg.chain or cfg.input, "chain")
    return req


def _run_local(cfg, verb, out):
    from .service import handlers

    req = _request(cfg, verb)
    if verb == "filter":
        lines = handlers.filter_lines(cfg, req["series_csv"], req["surrogate"])
        _stream_lines(lines, out)
        return 0
    if verb == "simulate":
        art = handlers.simulate(cfg)
    elif verb == "learn":
        art = handlers.learn(cfg, req["series_csv"])
    elif verb == "sweep":
        art = handlers.sweep(cfg, req["series_csv"], req["surrogate"])
    elif verb == "oracle":
        art = handlers.oracle(cfg)
    else:
        art = handlers.diagnose(cfg, req["chain_csv"])
    _emit(cfg, verb, art.files, out)
    if art.report:
        print(json.dumps(art.report, default=float), file=sys.stderr)
    return art.exit_code


def _emit(cfg, verb, files, out):
    _write(out, files["out"])
    if verb == "learn":
        chain_path = cfg.chain or (f"{out}.chain.csv" if out and out != "-" else None)
        if chain_path:
            _write(chain_path, files["chain"])
    if verb == "simulate" and cfg.truth:
        _write(cfg.truth, files["truth"])


def _stream_lines(lines, out):
    fh = sys.stdout if out in (None, "-") else open(out, "w")
    try:
        for line in lines:
            fh.write(line)
            fh.flush()
    finally:
        if fh is not sys.stdout:
            fh.close()


class RemoteError(DamhError):
    def __init__(self, body):
        super().__init__(f"{body.get('kind', 'Error')}: {body.get('error', '')}")
        self.exit_code = int(body.get("exit_code", 1))


def _raise_remote(resp):
    try:
        body = resp.json()
    except ValueError:
        body = {"error": resp.text, "exit_code": 1}
    raise RemoteError(body)


def _run_remote(cfg, verb, out, server):
    import httpx

    url = server.rstrip("/") + "/" + verb
    req = _request(cfg, verb)
    with httpx.Client(timeout=None) as client:
        if verb == "filter":
            with client.stream("POST", url, json=req) as resp:
                if resp.status_code != 200:
                    resp.read()
                    _raise_remote(resp)
                code = [0]

                def lines():
                    for line in resp.iter_lines():
                        if line.startswith("# error:"):
                            code[0] = int(line.split("exit_code=")[1].split()[0])
                            print(line, file=sys.stderr)
                        yield line + "\n"

                _stream_lines(lines(), out)
                return code[0]
        resp = client.post(url, json=req)
        if resp.status_code != 200:
            _raise_remote(resp)
        body = resp.json()
    _emit(cfg, verb, body["files"], out)
    if body.get("report"):
        print(json.dumps(body["report"]), file=sys.stderr)
    return int(body.get("exit_code", 0))


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verb == "serve":
        import uvicorn

        uvicorn.run("damh.service.app:app", host=args.host, port=args.port)
        return 0
    try:
        cfg = resolve_config(args)
        out = cfg.out
        if args.server:
            return _run_remote(cfg, args.verb, out, args.server)
        return _run_local(cfg, args.verb, out)
    except BrokenPipeError:
        # downstream reader went away (e.g. piped into head)
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        return 0
    except DamhError as exc:
        print(f"damh {args.verb}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
