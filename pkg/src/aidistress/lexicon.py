"""Bilingual AI lexicon compilation and disclosure text scanning.

Produces the eight AI adoption variables per firm-year: log-counts for the
annual report and its MD&A section, two length-normalized densities, and
log-counts of AI-matching patents by kind.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

# Column names of the emitted feature table, in fixed order.
AI_FEATURE_COLUMNS = [
    "AI patents total",
    "AI invention",
    "AI utility",
    "AI design",
    "AI level",
    "AI level MD&A",
    "AI density full",
    "AI density ChEn",
]

PATENT_KINDS = ("invention", "utility", "design")

_CJK = re.compile(r"[㐀-䶿一-鿿豈-﫿]")
_LATIN_TOKEN = re.compile(r"[A-Za-z0-9]+")

MDNA_MARKER = "===MDNA==="
NARRATIVE_MARKER = "===NARRATIVE==="


class LexiconError(ValueError):
    """Raised when a lexicon file violates the format contract."""


@dataclass(frozen=True)
class TermGroup:
    canonical_id: str
    surfaces: tuple[tuple[str, str], ...]  # (text, language), language in {zh, en}

    def __post_init__(self):
        if not self.surfaces:
            raise LexiconError(f"term group {self.canonical_id!r} has no surfaces")
        for text, lang in self.surfaces:
            has_cjk = bool(_CJK.search(text))
            if lang == "zh" and not has_cjk:
                raise LexiconError(
                    f"zh surface {text!r} in group {self.canonical_id!r} has no CJK codepoint"
                )
            if lang == "en" and has_cjk:
                raise LexiconError(
                    f"en surface {text!r} in group {self.canonical_id!r} contains CJK"
                )
            if lang not in ("zh", "en"):
                raise LexiconError(f"unknown language {lang!r} for surface {text!r}")


@dataclass(frozen=True)
class Lexicon:
    groups: tuple[TermGroup, ...]
    version: str = "1"

    def __post_init__(self):
        seen: dict[str, str] = {}
        for g in self.groups:
            for text, _lang in g.surfaces:
                key = text.lower()
                if key in seen:
                    raise LexiconError(
                        f"surface {text!r} appears in both group {seen[key]!r} "
                        f"and group {g.canonical_id!r}"
                    )
                seen[key] = g.canonical_id

    def __len__(self) -> int:
        return len(self.groups)

    @property
    def canonical_ids(self) -> list[str]:
        return [g.canonical_id for g in self.groups]


@dataclass(frozen=True)
class DocumentRecord:
    firm_id: str
    year: int
    full_text: str
    mdna_text: str | None = None
    narrative_text: str | None = None


@dataclass(frozen=True)
class PatentRecord:
    firm_id: str
    year: int
    kind: str
    title: str
    abstract: str

    def __post_init__(self):
        if self.kind not in PATENT_KINDS:
            raise ValueError(f"patent kind must be one of {PATENT_KINDS}, got {self.kind!r}")


@dataclass
class AiFeatures:
    ai_level: float = 0.0
    ai_level_mdna: float = 0.0
    ai_density_full: float = 0.0
    ai_density_chen: float = 0.0
    ai_patents_total: float = 0.0
    ai_invention: float = 0.0
    ai_utility: float = 0.0
    ai_design: float = 0.0
    # Data-quality flags, exported for audit; not model features.
    flags: list[str] = field(default_factory=list)

    def as_row(self) -> dict[str, float]:
        return {
            "AI patents total": self.ai_patents_total,
            "AI invention": self.ai_invention,
            "AI utility": self.ai_utility,
            "AI design": self.ai_design,
            "AI level": self.ai_level,
            "AI level MD&A": self.ai_level_mdna,
            "AI density full": self.ai_density_full,
            "AI density ChEn": self.ai_density_chen,
        }


def compile_lexicon(source: str | Path) -> Lexicon:
    """Compile a lexicon CSV (canonical_id, language, surface) into a Lexicon.

    Synonym surfaces collapse onto one canonical_id; groups are ordered
    deterministically by canonical_id.
    """
    path = Path(source)
    groups: dict[str, list[tuple[str, str]]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise LexiconError(f"lexicon file {path} is empty")
        if [c.strip().lower() for c in header[:3]] != ["canonical_id", "language", "surface"]:
            # headerless files are accepted; treat the first line as data
            reader = _chain_row(header, reader)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 3:
                raise LexiconError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            cid, lang, surface = row[0].strip(), row[1].strip(), row[2].strip()
            if not surface:
                raise LexiconError(f"{path}:{lineno}: empty surface in group {cid!r}")
            groups.setdefault(cid, []).append((surface, lang))
    if not groups:
        raise LexiconError(f"lexicon file {path} contains no term groups")
    compiled = tuple(
        TermGroup(cid, tuple(groups[cid])) for cid in sorted(groups)
    )
    return Lexicon(groups=compiled)


def _chain_row(first, rest):
    yield first
    yield from rest


def default_lexicon() -> Lexicon:
    """The shipped 72-group bilingual AI lexicon."""
    with resources.as_file(resources.files("aidistress.data") / "ai_lexicon.csv") as p:
        return compile_lexicon(p)


def _surface_pattern(text: str, lang: str) -> str:
    if lang == "en":
        # case-insensitive whole-word match; internal whitespace is flexible
        body = r"\s+".join(re.escape(tok) for tok in text.split())
        return rf"(?<![A-Za-z0-9])(?:{body})(?![A-Za-z0-9])"
    return re.escape(text)


@lru_cache(maxsize=8)
def _matcher(lex: Lexicon) -> re.Pattern:
    surfaces = [(text, lang) for g in lex.groups for text, lang in g.surfaces]
    # longest surface first so a shared prefix never shadows a longer term
    surfaces.sort(key=lambda s: (-len(s[0]), s[0]))
    alternation = "|".join(_surface_pattern(t, l) for t, l in surfaces)
    return re.compile(alternation, re.IGNORECASE)


def count_terms(doc_text: str, lex: Lexicon) -> int:
    """Total non-overlapping lexicon hits, longest-match-first, left-to-right."""
    if not doc_text:
        return 0
    return sum(1 for _ in _matcher(lex).finditer(doc_text))


def text_length(doc_text: str) -> int:
    """Lexical units: CJK codepoints plus contiguous Latin-letter/digit tokens."""
    cjk = len(_CJK.findall(doc_text))
    latin = len(_LATIN_TOKEN.findall(doc_text))
    return cjk + latin


def extract_ai_features(
    doc: DocumentRecord,
    patents: list[PatentRecord],
    lex: Lexicon,
) -> AiFeatures:
    """Compute all eight AI variables for one firm-year."""
    feats = AiFeatures()

    n_full = count_terms(doc.full_text, lex)
    len_full = text_length(doc.full_text)
    feats.ai_level = math.log1p(n_full)
    if len_full > 0:
        feats.ai_density_full = n_full / len_full
    else:
        feats.flags.append("empty_full_text")

    if doc.mdna_text is not None:
        feats.ai_level_mdna = math.log1p(count_terms(doc.mdna_text, lex))
    else:
        feats.flags.append("mdna_missing")

    if doc.narrative_text is not None:
        len_narr = text_length(doc.narrative_text)
        if len_narr > 0:
            feats.ai_density_chen = count_terms(doc.narrative_text, lex) / len_narr
        else:
            feats.flags.append("empty_narrative_text")
    else:
        feats.ai_density_chen = feats.ai_density_full
        feats.flags.append("narrative_fallback_full")

    kind_counts = dict.fromkeys(PATENT_KINDS, 0)
    for pat in patents:
        if (pat.firm_id, pat.year) != (doc.firm_id, doc.year):
            continue
        if count_terms(pat.title + " " + pat.abstract, lex) >= 1:
            kind_counts[pat.kind] += 1
    feats.ai_invention = math.log1p(kind_counts["invention"])
    feats.ai_utility = math.log1p(kind_counts["utility"])
    feats.ai_design = math.log1p(kind_counts["design"])
    feats.ai_patents_total = math.log1p(sum(kind_counts.values()))
    return feats


def parse_document_file(path: str | Path) -> DocumentRecord:
    """Read one `<firm_id>_<year>.txt` corpus file with optional section markers."""
    path = Path(path)
    stem = path.stem
    firm_id, _, year_s = stem.rpartition("_")
    if not firm_id or not year_s.isdigit():
        raise ValueError(f"corpus file name {path.name!r} is not <firm_id>_<year>.txt")
    raw = path.read_text(encoding="utf-8")

    sections: dict[str, list[str]] = {"": []}
    current = ""
    for line in raw.splitlines():
        marker = line.strip()
        if marker in (MDNA_MARKER, NARRATIVE_MARKER):
            current = marker
            sections.setdefault(current, [])
            continue
        sections[current].append(line)

    full_text = "\n".join(
        line for key in sections for line in sections[key]
    )
    mdna = "\n".join(sections[MDNA_MARKER]) if MDNA_MARKER in sections else None
    narrative = (
        "\n".join(sections[NARRATIVE_MARKER]) if NARRATIVE_MARKER in sections else None
    )
    return DocumentRecord(
        firm_id=firm_id,
        year=int(year_s),
        full_text=full_text,
        mdna_text=mdna,
        narrative_text=narrative,
    )


def read_patent_file(path: str | Path) -> list[PatentRecord]:
    """Read a patent CSV: firm_id, year, kind, title, abstract."""
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                PatentRecord(
                    firm_id=row["firm_id"],
                    year=int(row["year"]),
                    kind=row["kind"],
                    title=row.get("title", ""),
                    abstract=row.get("abstract", ""),
                )
            )
    return records
