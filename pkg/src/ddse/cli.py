"""Command-line front end.

A database directory holds two things: ``state.ddse``, the encrypted
client bundle (key material, distinct-state, quantity vectors), and
``store/``, the server-side encrypted store.  The passphrase sealing the
client bundle comes from DDSE_PASSPHRASE; the default directory from
DDSE_STORE.  With ``--server HOST:PORT`` the server half is remote and
only the client bundle is touched locally.

    ddse setup --db ./demo
    ddse register-table People People.name People.mail
    ddse exec "INSERT INTO People (People.name, People.mail) \\
               VALUE ('alice', 'a@x.org')"
    ddse exec "SELECT DISTINCT People.mail FROM People \\
               WHERE People.name = 'alice'"
    ddse serve --listen 127.0.0.1:7070
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

from . import audit as audit_mod
from . import bench as bench_mod
from . import query as q
from . import statefile
from . import workload as wl
from .client import ProtocolError
from .netclient import RemoteEdb
from .store import PersistentStore

log = logging.getLogger("ddse")


class CliError(RuntimeError):
    pass


def _db_dir(args) -> str:
    db = args.db or os.environ.get("DDSE_STORE")
    if not db:
        raise CliError("no database directory: pass --db or set DDSE_STORE")
    return db


def _passphrase() -> str:
    pw = os.environ.get("DDSE_PASSPHRASE")
    if not pw:
        raise CliError("DDSE_PASSPHRASE is not set; client state stays "
                       "encrypted at rest and needs a passphrase")
    return pw


def _state_path(db: str) -> str:
    return os.path.join(db, "state.ddse")


def _store_path(db: str) -> str:
    return os.path.join(db, "store")


def _load_registry(db: str) -> q.Registry:
    bundle = statefile.load(_state_path(db), _passphrase())
    return bundle["registry"]


def _save_registry(db: str, registry: q.Registry) -> None:
    statefile.save(_state_path(db), _passphrase(), {"registry": registry})


def _open_edb(args, db):
    """Returns (edb, closer)."""
    if getattr(args, "server", None):
        host, _, port = args.server.rpartition(":")
        if not host:
            raise CliError("--server needs HOST:PORT")
        remote = RemoteEdb(host, int(port))
        return remote, remote.close
    store = PersistentStore(_store_path(db))
    return store, store.close


def _show(value: bytes) -> str:
    try:
        text = value.decode("utf-8")
        if text.isprintable() and text:
            return text
    except UnicodeDecodeError:
        pass
    return "0x" + value.hex()


def cmd_setup(args) -> int:
    db = _db_dir(args)
    pw = _passphrase()
    os.makedirs(db, exist_ok=True)
    path = _state_path(db)
    if os.path.exists(path) and not args.force:
        raise CliError(f"{path} already exists (use --force to replace)")
    statefile.save(path, pw, {"registry": q.Registry()})
    os.makedirs(_store_path(db), exist_ok=True)
    print(f"initialized {db}")
    return 0


def cmd_register_table(args) -> int:
    db = _db_dir(args)
    registry = _load_registry(db)
    config = q.TableConfig(args.table, args.keyword_column, args.value_column,
                           args.order, bf_n=args.bf_n, bf_p=args.bf_p,
                           d_max=args.d_max)
    registry.register(config)
    _save_registry(db, registry)
    print(f"registered {config.manifest_line()}")
    return 0


def cmd_exec(args) -> int:
    db = _db_dir(args)
    registry = _load_registry(db)
    edb, closer = _open_edb(args, db)
    try:
        result = q.exec_statement(registry, args.statement, edb)
    finally:
        closer()
    # searches rotate epochs and updates advance counters: always persist
    _save_registry(db, registry)
    if result is None:
        print("ok")
    elif isinstance(result, set):
        for v in sorted(result):
            print(_show(v))
    else:
        for v in result:
            print(_show(v))
    return 0


def cmd_ingest(args) -> int:
    db = _db_dir(args)
    registry = _load_registry(db)
    edb, closer = _open_edb(args, db)
    done = skipped = 0
    try:
        with open(args.csv, newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.DictReader(fh), start=2):
                w = row.get(args.keyword_column)
                v = row.get(args.value_column)
                if not w or not v:
                    log.warning("line %d: missing %s or %s, skipped",
                                lineno, args.keyword_column,
                                args.value_column)
                    skipped += 1
                    continue
                plan = q.QueryPlan(q.SYN_INS, (
                    args.table,
                    (args.keyword_column, w.encode(),
                     args.value_column, v.encode())))
                q.execute(registry, plan, edb)
                done += 1
    finally:
        closer()
    _save_registry(db, registry)
    print(f"ingested {done} rows ({skipped} skipped)")
    return 0


def cmd_bench(args) -> int:
    spec = wl.WorkloadSpec(keywords=args.keywords, updates=args.updates,
                           duplicate_ratio=args.duplicate_ratio,
                           delete_fraction=args.delete_fraction,
                           distribution=args.distribution,
                           zipf_s=args.zipf_s, seed=args.seed)
    report = bench_mod.run(spec)
    print(report.summary())
    if args.out:
        bench_mod.write_jsonl(report, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_audit(args) -> int:
    spec = wl.WorkloadSpec(keywords=args.keywords, updates=args.updates,
                           seed=args.seed)
    ops = wl.generate(spec)
    searches = [("search", wl.keyword_name(i)) for i in range(spec.keywords)]
    transcript = audit_mod.record(ops + searches, mutant=args.mutant)
    if args.dump:
        print(transcript.dump(limit=32))
    shifted = wl.generate(wl.WorkloadSpec(
        keywords=spec.keywords, updates=spec.updates, seed=spec.seed,
        duplicate_ratio=spec.duplicate_ratio,
        delete_fraction=spec.delete_fraction))
    paired = audit_mod.record(
        [(kind, b"paired-" + w, v) for kind, w, v in shifted],
        mutant=args.mutant)
    fp = audit_mod.fp_check(transcript, paired=paired)
    print(f"forward-privacy: {fp}")
    volumes0 = [(2, 5), (3, 3), (1, 4)]
    volumes1 = [(2, 3), (3, 5), (1, 4)]
    dwvh = audit_mod.dwvh_game(volumes0, volumes1)
    print(f"distinct-volume-hiding: {dwvh}")
    ok = fp.ok and dwvh.ok
    return 0 if ok else 1


def cmd_serve(args) -> int:
    from .server import Server
    db = _db_dir(args)
    host, _, port = args.listen.rpartition(":")
    if not host:
        raise CliError("--listen needs HOST:PORT")
    store = PersistentStore(_store_path(db))
    server = Server(store, host, int(port))
    print(f"listening on {server.address[0]}:{server.address[1]}",
          flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
        store.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddse",
        description="encrypted search over dynamic tables with "
                    "distinct-query support")
    parser.add_argument("--db", help="database directory "
                                     "(default: $DDSE_STORE)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("setup", help="create a new database directory")
    p.add_argument("--force", action="store_true")
    p.set_defaults(run=cmd_setup)

    p = sub.add_parser("register-table", help="register an encrypted index")
    p.add_argument("table")
    p.add_argument("keyword_column")
    p.add_argument("value_column")
    p.add_argument("--order", default=q.ORDER_LEX,
                   choices=[q.ORDER_LEX, q.ORDER_NUMERIC])
    p.add_argument("--bf-n", type=int, default=2 ** 20,
                   help="distinct-pair capacity")
    p.add_argument("--bf-p", type=float, default=1e-5,
                   help="false-positive budget for the distinct state")
    p.add_argument("--d-max", type=int, default=1000,
                   help="per-keyword duplicate/delete budget")
    p.set_defaults(run=cmd_register_table)

    p = sub.add_parser("exec", help="run one statement")
    p.add_argument("statement")
    p.add_argument("--server", help="HOST:PORT of a remote store")
    p.set_defaults(run=cmd_exec)

    p = sub.add_parser("ingest", help="bulk-insert rows from a CSV file")
    p.add_argument("csv")
    p.add_argument("--table", required=True)
    p.add_argument("--keyword-column", required=True)
    p.add_argument("--value-column", required=True)
    p.add_argument("--server", help="HOST:PORT of a remote store")
    p.set_defaults(run=cmd_ingest)

    p = sub.add_parser("bench", help="run a synthetic benchmark")
    p.add_argument("--keywords", type=int, default=50)
    p.add_argument("--updates", type=int, default=5000)
    p.add_argument("--duplicate-ratio", type=float, default=0.3)
    p.add_argument("--delete-fraction", type=float, default=0.1)
    p.add_argument("--distribution", default=wl.DIST_UNIFORM,
                   choices=[wl.DIST_UNIFORM, wl.DIST_ZIPF])
    p.add_argument("--zipf-s", type=float, default=1.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write a JSONL report here")
    p.set_defaults(run=cmd_bench)

    p = sub.add_parser("audit", help="run the leakage audits")
    p.add_argument("--keywords", type=int, default=8)
    p.add_argument("--updates", type=int, default=120)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mutant", action="store_true",
                   help="audit the deliberately leaky transport instead "
                        "(expected verdict: FAIL)")
    p.add_argument("--dump", action="store_true",
                   help="print a transcript preview first")
    p.set_defaults(run=cmd_audit)

    p = sub.add_parser("serve", help="serve a database directory over TCP")
    p.add_argument("--listen", default="127.0.0.1:7070")
    p.set_defaults(run=cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except (CliError, statefile.StateFileError, q.QueryError,
            q.StatementError, ProtocolError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
