"""Regenerate crates/core/data/lexicon.tsv.

English words come from the wordfreq package (frequency per billion words);
a curated programming vocabulary is merged in. Run from the repo root:

    pip install wordfreq && python3 scripts/gen_lexicon.py
"""
import re
from wordfreq import top_n_list, zipf_frequency

MIN_ZIPF = 3.0

# Two-letter words are noisy in web frequency lists; only these are kept.
TWO_LETTER = """
ab ad ai am an as at be by db do fs go he hi id if in io is it me my no of
ok on op or os ox pi re so to ui up us we xy
""".split()

PROGRAMMING = """
abs accessor addr admin ajax alloc api app apps arg argc args argv arr ascii
asm assert async attr attrs auth autocomplete backend base bool boolean buf
bytes cfg charset checksum chmod cli cmd codec config configs const coord
coords cpu csv ctx cwd daemon datetime dbg decl decode decoder decrypt dedup
def del delim deque deserialize dest dict dicts dir dirs dirname doc docs
docstring dtype elem elems elif encode encoder endian enum env eof eol err
errno exe exec expr exprs ext fd fifo fmt fn fname func funcs getattr getter
gid goto gzip hash hasher hashmap hex hostname href html http https idx impl
init inline int ints iter iterable iterator json jwt kwarg kwargs lambda len
lexer lib libs linter localhost lookup lru malloc metadata middleware mime
mkdir msg msgs mutex namespace ndarray nginx noop num nums obj objs offset
param params parser pid pkg png prefetch proc ptr pwd py qs queue regex repo
req res resp rgb rpc runtime sdk serialize setattr setter sig sql src ssh
stderr stdin stdout str strs struct subclass subprocess sudo svg sys tcp
temp timestamp tmp todo tok toks tuple tuples txt uid uint url urls usr utc
utf util utils uuid val vals var vars vec vertex vertices xml yaml zip
""".split()

words = {}
for w in top_n_list("en", 60000):
    if not re.fullmatch(r"[a-z]+", w):
        continue
    z = zipf_frequency(w, "en")
    if z < MIN_ZIPF:
        continue
    if len(w) < 3 and w not in TWO_LETTER:
        continue
    words[w] = round(10 ** z)
for w in TWO_LETTER + PROGRAMMING:
    if w not in words:
        words[w] = max(1, round(10 ** max(zipf_frequency(w, "en"), 1.0)))

with open("crates/core/data/lexicon.tsv", "w", encoding="utf-8") as fh:
    for w in sorted(words):
        fh.write(f"{w}\t{words[w]}\n")
print(len(words), "entries")
