"""Regenerate the bundled desk corpus from the local CPython standard library.

Each selected function contributes one code document (source with the
docstring removed) and one query (the docstring's first sentence). Extra
functions without queries are added as distractors.

    python3 scripts/make_desk_corpus.py
"""
import ast
import json
import pathlib
import random
import sysconfig

OUT = pathlib.Path("crates/core/data/desk")
N_QUERIES = 300
N_DISTRACTORS = 300
MODULES = [
    "argparse", "ast", "base64", "calendar", "configparser", "csv", "difflib",
    "email/message.py", "email/utils.py", "fractions", "ftplib", "gettext",
    "gzip", "heapq", "imaplib", "inspect", "ipaddress", "json/decoder.py",
    "json/encoder.py", "logging/__init__.py", "mailbox", "netrc", "nntplib",
    "optparse", "os", "pathlib", "pickle", "pkgutil", "platform", "plistlib",
    "poplib", "pprint", "shlex", "shutil", "smtplib", "statistics", "string",
    "subprocess", "tarfile", "tempfile", "textwrap", "threading", "tokenize",
    "traceback", "urllib/parse.py", "urllib/request.py", "uuid", "wave",
    "zipfile", "http/client.py", "http/cookies.py", "http/server.py",
    "xml/dom/minidom.py", "datetime", "decimal", "locale", "codecs", "bdb",
    "cmd", "code", "dis", "doctest", "filecmp", "fnmatch", "glob", "hmac",
    "imghdr", "mimetypes", "operator", "pdb", "queue", "quopri", "random",
    "sched", "selectors", "socketserver", "sre_parse", "stat", "symtable",
    "sysconfig", "timeit", "trace", "typing", "warnings", "weakref", "zipapp",
]


def first_sentence(doc):
    para = doc.strip().split("\n\n")[0]
    text = " ".join(para.split())
    return text.split(". ")[0].rstrip(".")


def strip_docstring(src):
    tree = ast.parse(src)
    fn = tree.body[0]
    doc = fn.body[0]
    lines = src.splitlines()
    kept = lines[: doc.lineno - 1] + lines[doc.end_lineno :]
    return "\n".join(kept)


def main():
    stdlib = pathlib.Path(sysconfig.get_paths()["stdlib"])
    funcs = []
    for mod in MODULES:
        path = stdlib / (mod if mod.endswith(".py") else mod + ".py")
        if not path.exists():
            continue
        src = path.read_text(encoding="utf-8", errors="replace")
        tree = ast.parse(src)
        for node in ast.walk(tree):
            if not isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                continue
            seg = ast.get_source_segment(src, node)
            if seg is None or node.col_offset:
                # re-indent methods so the snippet parses standalone
                seg = ast.get_source_segment(src, node, padded=True)
                if seg is None:
                    continue
                import textwrap
                seg = textwrap.dedent(seg)
            url = f"stdlib/{mod.removesuffix('.py')}#L{node.lineno}-{node.name}"
            doc = ast.get_docstring(node)
            funcs.append((url, node.name, seg, doc))
    funcs.sort()
    rng = random.Random(20230415)
    with_doc = [f for f in funcs if f[3] and len(first_sentence(f[3]).split()) >= 4
                and f[2].count("\n") >= 4 and not f[1].startswith("test")]
    rng.shuffle(with_doc)
    seen = set()
    picked = []
    for f in with_doc:
        q = first_sentence(f[3])
        if q.lower() in seen:
            continue
        try:
            code = strip_docstring(f[2])
        except (SyntaxError, IndexError):
            continue
        if code.count("\n") < 3:
            continue
        seen.add(q.lower())
        picked.append((f[0], code, q))
        if len(picked) == N_QUERIES:
            break
    used = {p[0] for p in picked}
    others = [f for f in funcs if f[0] not in used and f[2].count("\n") >= 3]
    rng.shuffle(others)
    distract = []
    for f in others[:N_DISTRACTORS]:
        code = f[2]
        if f[3]:
            try:
                code = strip_docstring(code)
            except (SyntaxError, IndexError):
                continue
        distract.append((f[0], code))
    docs = [(u, c) for u, c, _ in picked] + distract
    docs.sort()
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "corpus.jsonl", "w", encoding="utf-8") as fh:
        for u, c in docs:
            fh.write(json.dumps({"url": u, "code": c, "language": "python"}) + "\n")
    with open(OUT / "queries.jsonl", "w", encoding="utf-8") as fh:
        for i, (u, _, q) in enumerate(sorted(picked)):
            fh.write(json.dumps({"id": f"q{i:03d}", "query": q, "url": u}) + "\n")
    print(len(docs), "documents,", len(picked), "queries")


if __name__ == "__main__":
    main()
