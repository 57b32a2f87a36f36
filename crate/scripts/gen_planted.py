#!/usr/bin/env python3
"""Generate the planted synthetic corpus and its expected results.

Writes, next to each other in crates/core/tests/data/:

  planted.jsonl          Markdown-bodied posts (jsonl input format)
  planted.xml            the same corpus in Posts.xml shape (HTML bodies)
  planted_expected.json  ground truth computed from the planting plan

Expected values come from the plan (which snippet identity went where), not
from running the normalizer, so they check the pipeline independently.
"""

import datetime as dt
import html
import json
import random
import statistics
from pathlib import Path
from xml.sax.saxutils import quoteattr

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "tests" / "data"
RNG = random.Random(20191)
BASE = dt.datetime(2012, 4, 1, 9, 0, 0)

# label, nloc, threads, copies per thread
GROUPS = [
    ("g01", 60, 5, 1),
    ("g02", 45, 4, 1),
    ("g03", 35, 5, 9),   # 45 posts, 3 of which link the tutorial site
    ("g04", 30, 3, 1),   # reference-doc snippet
    ("g05", 25, 3, 1),
    ("g06", 24, 2, 1),
    ("g07", 21, 4, 1),   # same author everywhere
    ("g08", 20, 2, 1),   # exactly at the strict threshold
    ("g09", 19, 2, 1),   # just below it
    ("g10", 12, 3, 1),
    ("g11", 8, 2, 1),
    ("g12", 6, 2, 1),    # exactly at the loose threshold
    ("g13", 5, 2, 1),
    ("g14", 3, 4, 1),
    ("g15", 40, 1, 3),   # three copies inside a single thread
    ("g16", 28, 1, 1),
]
DECOYS = {"g01": 1, "g05": 1, "g06": 1}
N_THREADS = 60
N_FILLERS = 70

LINK_RULES = {
    "androidhive.info": "tutorial_site",
    "developer.android.com": "reference_doc",
    "stackoverflow.com": "qa_internal",
    "stackexchange.com": "qa_internal",
    "github.com": "code_host",
}


def code_lines(label, n):
    names = ["compute", "render", "load", "parse", "bind", "query", "emit"]
    out = []
    for i in range(n):
        fn = names[i % len(names)]
        out.append(f"    {label}Value{i} = {fn}{label.upper()}({i}, \"{label}-{i}\");")
    return out


def decorate(lines, variant):
    """Formatting noise that must not change the normalized identity."""
    out = []
    for i, line in enumerate(lines):
        if variant and i % 5 == 1:
            out.append("{")
        if variant and i % 7 == 3:
            out.append("")
            out.append("   ")
        if variant and i % 4 == 0:
            line = line.replace("(", " ( ").replace(", ", " ,  ") + "   "
        out.append(line)
        if i % 9 == 8:
            out.append("  }")
    if variant:
        out.append("])")
        out.append("")
    return out


def render_block(lines, kind, crlf=False):
    nl = "\r\n" if crlf else "\n"
    if kind == "fenced":
        return "```java" + nl + nl.join(lines) + nl + "```"
    if kind == "tilde":
        return "~~~" + nl + nl.join(lines) + nl + "~~~"
    if kind == "indented":
        return nl.join(("    " + l) if l.strip() else "" for l in lines)
    if kind == "pre":
        return "<pre><code>" + html.escape("\n".join(lines), quote=False) + "\n</code></pre>"
    raise ValueError(kind)


class Post:
    def __init__(self, post_id, post_type, thread, created, author):
        self.post_id = post_id
        self.post_type = post_type
        self.thread = thread
        self.created = created
        self.author = author
        self.parts = []      # ("prose", text) | ("code", lines, kind, crlf)
        self.identities = []  # identity label of each code block that survives normalization
        self.links = set()    # rule domains cited in prose
        self.unlisted = set()  # cited domains absent from the rule table

    def markdown(self):
        chunks = []
        for part in self.parts:
            if part[0] == "prose":
                chunks.append(part[1])
            else:
                _, lines, kind, crlf = part
                chunks.append(render_block(lines, kind, crlf))
        return "\n\n".join(chunks)

    def html(self):
        chunks = []
        for part in self.parts:
            if part[0] == "prose":
                chunks.append("<p>" + prose_to_html(part[1]) + "</p>")
            else:
                _, lines, _, crlf = part
                text = ("\r\n" if crlf else "\n").join(lines)
                chunks.append("<pre><code>" + html.escape(text, quote=False) + "\n</code></pre>")
        return "\n\n".join(chunks)


def prose_to_html(text):
    """Minimal Markdown-prose to HTML: links, inline code, bare URLs."""
    import re

    out = []
    pos = 0
    pattern = re.compile(r"\[([^\]]+)\]\(([^)\s]+)\)|`([^`]+)`|(https?://\S+)")
    for m in pattern.finditer(text):
        out.append(html.escape(text[pos:m.start()]))
        if m.group(1):
            out.append(f'<a href="{html.escape(m.group(2))}" rel="nofollow">{html.escape(m.group(1))}</a>')
        elif m.group(3):
            out.append(f"<code>{html.escape(m.group(3))}</code>")
        else:
            url = m.group(4)
            out.append(f'<a href="{html.escape(url)}">{html.escape(url)}</a>')
        pos = m.end()
    out.append(html.escape(text[pos:]))
    return "".join(out)


def main():
    posts = []
    next_id = [1000]

    def new_id():
        next_id[0] += RNG.randint(1, 7)
        return next_id[0]

    threads = []
    for t in range(N_THREADS):
        qid = new_id()
        q = Post(qid, "question", qid, BASE + dt.timedelta(days=9 * t, hours=RNG.randint(0, 20)),
                 RNG.randint(1, 400))
        q.parts.append(("prose", f"Question {t}: how do I get this working?"))
        posts.append(q)
        threads.append(q)

    def add_answer(q, author=None):
        a = Post(new_id(), "answer", q.post_id,
                 q.created + dt.timedelta(days=RNG.randint(0, 400), minutes=RNG.randint(1, 900)),
                 author if author is not None else RNG.randint(1, 400))
        a.parts.append(("prose", "Try this:"))
        posts.append(a)
        return a

    kinds = ["fenced", "indented", "tilde", "pre"]
    groups_expected = {}
    for label, nloc, n_threads, per_thread in GROUPS:
        lines = code_lines(label, nloc)
        chosen = RNG.sample(threads, n_threads)
        members = []
        copy_no = 0
        for q in chosen:
            for _ in range(per_thread):
                author = 4242 if label == "g07" else None
                # a bare question without planted code can host the first copy
                if not q.identities and copy_no % 3 == 0 and label != "g07":
                    host = q
                else:
                    host = add_answer(q, author)
                variant = copy_no % 2 == 1
                crlf = copy_no % 4 == 3
                kind = kinds[copy_no % len(kinds)]
                host.parts.append(("code", decorate(lines, variant), kind, crlf))
                host.identities.append(label)
                members.append(host)
                copy_no += 1
        by_author = {}
        for p in members:
            by_author.setdefault(p.author, set()).add(p.thread)
        groups_expected[label] = {
            "same_author_chain": any(len(t) >= 2 for t in by_author.values()),
            "nloc": nloc,
            "thread_count": n_threads,
            "post_ids": sorted({p.post_id for p in members}),
            "occurrences": len(members),
        }

    # near-duplicate decoys: one alphanumeric change, placed in other threads
    for label, count in DECOYS.items():
        nloc = next(g[1] for g in GROUPS if g[0] == label)
        for k in range(count):
            lines = code_lines(label, nloc)
            lines[2] = lines[2].replace("Value2", "Value2x")
            q = RNG.choice(threads)
            host = add_answer(q)
            host.parts.append(("code", decorate(lines, False), "fenced", False))
            host.identities.append(f"{label}-decoy{k}")

    # unique filler blocks
    for f in range(N_FILLERS):
        q = RNG.choice(threads)
        host = q if (not q.identities and f % 4 == 0) else add_answer(q)
        n = RNG.randint(1, 30)
        lines = [f"    filler{f}Step{i}();" for i in range(n)]
        host.parts.append(("code", lines, kinds[f % 4], False))
        host.identities.append(f"filler{f}")
        if f % 11 == 0:
            host.parts.append(("prose", "Also see https://github.com/example/repo for the full project."))
            host.links.add("github.com")
        if f % 13 == 5:
            second = [f"    fillerExtra{f}Line{i}();" for i in range(3)]
            host.parts.append(("prose", "And a second snippet:"))
            host.parts.append(("code", second, "fenced", False))
            host.identities.append(f"filler{f}-extra")

    # blocks that normalize to nothing
    for q in RNG.sample(threads, 2):
        host = add_answer(q)
        host.parts.append(("code", ["{", "  }", "", "( )"], "fenced", False))

    # attribution plan
    g03 = [p for p in posts if "g03" in p.identities]
    g03.sort(key=lambda p: p.post_id)
    for i, style in zip((4, 20, 37), ("md", "bare", "md")):
        p = g03[i]
        if style == "md":
            p.parts.insert(0, ("prose", "Based on [this androidhive tutorial](http://www.androidhive.info/2012/05/how-to-connect-android-with-php-mysql/)."))
        else:
            p.parts.append(("prose", "Source: https://www.androidhive.info/2012/05/how-to-connect-android-with-php-mysql/"))
        p.links.add("androidhive.info")

    g04 = sorted((p for p in posts if "g04" in p.identities), key=lambda p: p.post_id)
    for p in g04[:2]:
        p.parts.append(("prose", "Adapted from the [Android docs](https://developer.android.com/training/articles/security-ssl.html)."))
        p.links.add("developer.android.com")
    # a URL only in inline code is not a citation
    g04[2].parts.append(("prose", "The endpoint is `https://developer.android.com/training/articles/security-ssl.html` here."))

    g05 = sorted((p for p in posts if "g05" in p.identities), key=lambda p: p.post_id)
    g05[0].parts.append(("prose", "Found on https://someblog.example.net/2013/snippet."))
    g05[0].unlisted.add("someblog.example.net")
    g05[1].parts.append(("prose", "Duplicate of https://stackoverflow.com/q/%d" % g05[0].thread))
    g05[1].links.add("stackoverflow.com")

    # a tag-wiki style post holding a copy of g01; must be ignored
    wiki = Post(new_id(), "tag_wiki", None, BASE + dt.timedelta(days=30), 1)
    wiki.parts.append(("code", code_lines("g01", 60), "fenced", False))
    posts.append(wiki)

    # some prose-only answers
    for _ in range(12):
        add_answer(RNG.choice(threads)).parts.append(("prose", "You could also read the manual."))

    posts.sort(key=lambda p: p.post_id)
    RNG.shuffle(posts)  # input order must not matter

    write_jsonl(posts)
    write_xml(posts)
    write_expected(posts, groups_expected)


def ts(d):
    return d.strftime("%Y-%m-%dT%H:%M:%SZ")


def write_jsonl(posts):
    with open(OUT / "planted.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for p in posts:
            rec = {"post_id": p.post_id, "post_type": p.post_type}
            if p.post_type == "answer":
                rec["parent_id"] = p.thread
            rec["creation_date"] = ts(p.created)
            rec["author_id"] = p.author
            rec["score"] = RNG.randint(-2, 60)
            rec["body"] = p.markdown()
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def xml_attr(value):
    s = quoteattr(value, {"\n": "&#xA;", "\r": "&#xD;", "\t": "&#x9;"})
    return s


def write_xml(posts):
    type_ids = {"question": 1, "answer": 2, "tag_wiki": 5}
    with open(OUT / "planted.xml", "w", encoding="utf-8", newline="\n") as f:
        f.write('<?xml version="1.0" encoding="utf-8"?>\n<posts>\n')
        for p in posts:
            attrs = [f'Id="{p.post_id}"', f'PostTypeId="{type_ids[p.post_type]}"']
            if p.post_type == "answer":
                attrs.append(f'ParentId="{p.thread}"')
            attrs.append(f'CreationDate="{p.created.strftime("%Y-%m-%dT%H:%M:%S")}.000"')
            attrs.append(f'OwnerUserId="{p.author}"')
            attrs.append(f"Body={xml_attr(p.html())}")
            f.write("  <row " + " ".join(attrs) + " />\n")
        f.write("</posts>\n")


def type7(values, p):
    s = sorted(values)
    h = (len(s) - 1) * p
    lo = int(h)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (h - lo) * (s[hi] - s[lo])


def describe(values):
    if not values:
        return None
    return {
        "mean": statistics.fmean(values),
        "sd": statistics.stdev(values) if len(values) > 1 else None,
        "median": statistics.median(values),
        "iqr": type7(values, 0.75) - type7(values, 0.25),
    }


def write_expected(posts, groups):
    qa = [p for p in posts if p.post_type in ("question", "answer")]
    identities = {i for p in qa for i in p.identities}
    cloned = {l for l, g in groups.items() if g["thread_count"] >= 2}

    def ranked(min_nloc):
        sel = [(l, g) for l, g in groups.items() if g["thread_count"] >= 2 and g["nloc"] >= min_nloc]
        sel.sort(key=lambda lg: (-lg[1]["thread_count"], -lg[1]["nloc"]))
        return [l for l, _ in sel]

    strict = ranked(20)
    hist = {}
    for l in strict:
        tc = groups[l]["thread_count"]
        hist[str(tc)] = hist.get(str(tc), 0) + 1
    nlocs = [groups[l]["nloc"] for l in strict]
    tcs = [groups[l]["thread_count"] for l in strict]

    expected = {
        "posts": len(posts),
        "threads": N_THREADS,
        "distinct_fingerprints": len(identities),
        "cloned_fingerprints": len(cloned),
        "cloned_fraction": len(cloned) / len(identities),
        "groups": groups,
        "ranked_min_nloc_20": strict,
        "ranked_min_nloc_6": ranked(6),
        "ranked_min_nloc_0": ranked(0),
        "histogram_min_nloc_20": hist,
        "nloc_stats_min_nloc_20": describe(nlocs),
        "thread_stats_min_nloc_20": describe(tcs),
        "pct_more_than_two_threads_min_nloc_20": sum(1 for t in tcs if t > 2) / len(tcs),
        "rule_links": {str(p.post_id): sorted(p.links) for p in posts if p.links},
        "unlisted_links": {str(p.post_id): sorted(p.unlisted) for p in posts if p.unlisted},
        "attribution_45": {"group": "g03", "domain": "androidhive.info", "attributed": 3, "posts": 45},
    }
    with open(OUT / "planted_expected.json", "w", encoding="utf-8", newline="\n") as f:
        json.dump(expected, f, indent=2, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    main()
