"""Five-sentence story corpus handling.

Parses the CSV corpus format, extracts {title, target words, sentences}
tuples against a vocabulary pool, computes dataset statistics, and exports
training examples for the generation and infilling tasks.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

from . import text
from .lexicon import VocabPool
from .text import MASK, SurfaceIndex, flesch_reading_ease

CSV_COLUMNS = (
    "storyid",
    "storytitle",
    "sentence1",
    "sentence2",
    "sentence3",
    "sentence4",
    "sentence5",
)

#: Placeholder used in prompts when a story has no title.
NO_TITLE = "no title"


class CorpusFormatError(ValueError):
    """Malformed corpus input; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Story:
    id: str
    title: str
    sentences: tuple[str, ...]

    def __post_init__(self):
        if not self.sentences:
            raise ValueError(f"story {self.id!r} has no sentences")
        for i, sentence in enumerate(self.sentences):
            if not sentence.strip():
                raise ValueError(f"story {self.id!r} sentence {i} is blank")

    @property
    def text(self) -> str:
        return " ".join(self.sentences)


@dataclass(frozen=True)
class WordOccurrence:
    word: str
    sentence_index: int
    token_index: int
    surface: str


@dataclass(frozen=True)
class StoryTuple:
    story: Story
    occurrences: tuple[WordOccurrence, ...]

    @property
    def headwords(self) -> list[str]:
        """Headwords in occurrence order, one per occurrence."""
        return [occ.word for occ in self.occurrences]


@dataclass(frozen=True)
class CorpusStats:
    story_count: int
    word_count: int
    avg_story_length: float
    avg_sentence_length: float
    avg_readability: float
    vocab_coverage: float

    def to_dict(self) -> dict:
        return {
            "story_count": self.story_count,
            "word_count": self.word_count,
            "avg_story_length": self.avg_story_length,
            "avg_sentence_length": self.avg_sentence_length,
            "avg_readability": self.avg_readability,
            "vocab_coverage": self.vocab_coverage,
        }


@dataclass(frozen=True)
class TrainingExample:
    task: str  # "generate" | "infill"
    input_text: str
    target_text: str

    def __post_init__(self):
        if self.task not in ("generate", "infill"):
            raise ValueError(f"unknown task {self.task!r}")
        if not self.input_text or not self.target_text:
            raise ValueError("training example with empty input or target")
        if self.task == "infill" and self.input_text.count(MASK) != 1:
            raise ValueError("infill input must contain exactly one mask marker")


def parse_corpus(source: IO[str]) -> list[Story]:
    """Read the CSV corpus (header row, RFC-4180 quoting) into stories.

    Empty titles are preserved as empty strings. A row with the wrong column
    count raises :class:`CorpusFormatError` naming the line.
    """
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise CorpusFormatError("empty corpus file", line=1) from None
    if [h.strip().lower() for h in header] != list(CSV_COLUMNS):
        raise CorpusFormatError(
            f"unexpected header {header!r}, want {','.join(CSV_COLUMNS)}", line=1
        )
    stories = []
    for row in reader:
        lineno = reader.line_num
        if not row:
            continue
        if len(row) != len(CSV_COLUMNS):
            raise CorpusFormatError(
                f"column count mismatch at line {lineno}: got {len(row)}, want {len(CSV_COLUMNS)}",
                line=lineno,
            )
        story_id, title, *sentences = row
        try:
            stories.append(Story(id=story_id, title=title, sentences=tuple(sentences)))
        except ValueError as exc:
            raise CorpusFormatError(f"bad record at line {lineno}: {exc}", line=lineno) from exc
    return stories


def extract_tuple(story: Story, vocab: VocabPool | SurfaceIndex) -> StoryTuple:
    """Find every vocabulary-word occurrence in the story, in story order.

    Matching uses the shared inflection rule; an empty occurrence list is a
    legal result. Pass a prebuilt :class:`SurfaceIndex` when scanning many
    stories against the same pool.
    """
    index = vocab if isinstance(vocab, SurfaceIndex) else SurfaceIndex(vocab.words)
    occurrences = []
    for sentence_index, sentence in enumerate(story.sentences):
        for occ in text.find_occurrences(sentence, index):
            occurrences.append(
                WordOccurrence(
                    word=occ.headword,
                    sentence_index=sentence_index,
                    token_index=occ.token_index,
                    surface=occ.surface,
                )
            )
    return StoryTuple(story=story, occurrences=tuple(occurrences))


def dataset_stats(corpus: Sequence[Story], vocab: VocabPool) -> CorpusStats:
    """Token counts, mean Flesch Reading-Ease, and vocabulary coverage."""
    if not corpus:
        raise ValueError("empty corpus")
    index = SurfaceIndex(vocab.words)
    total_tokens = 0
    total_sentences = 0
    readability_sum = 0.0
    covered: set[str] = set()
    for story in corpus:
        tokens = text.tokenize(story.text)
        total_tokens += len(tokens)
        total_sentences += len(story.sentences)
        readability_sum += flesch_reading_ease(story.text)
        if len(covered) < len(index):
            for occ in extract_tuple(story, index).occurrences:
                covered.add(occ.word)
    return CorpusStats(
        story_count=len(corpus),
        word_count=total_tokens,
        avg_story_length=total_tokens / len(corpus),
        avg_sentence_length=total_tokens / total_sentences,
        avg_readability=readability_sum / len(corpus),
        vocab_coverage=len(covered) / len(vocab),
    )


def _prompt_title(title: str) -> str:
    return title if title.strip() else NO_TITLE


def make_generation_example(story_tuple: StoryTuple) -> TrainingExample:
    """Prompt = title plus chronologically ordered target words; target = the story.

    A headword appears once per occurrence, in story order.
    """
    if not story_tuple.occurrences:
        raise ValueError("no target words in story")
    input_text = (
        f"title: {_prompt_title(story_tuple.story.title)}"
        f" | words: {', '.join(story_tuple.headwords)}"
    )
    return TrainingExample(task="generate", input_text=input_text, target_text=story_tuple.story.text)


def _unused_before(story_tuple: StoryTuple, sentence_index: int) -> list[str]:
    """Headwords that have not yet appeared before this sentence, in story order."""
    used_before = {
        occ.word for occ in story_tuple.occurrences if occ.sentence_index < sentence_index
    }
    unused = []
    for occ in story_tuple.occurrences:
        if occ.word not in used_before and occ.word not in unused:
            unused.append(occ.word)
    return unused


def make_infill_examples(
    story_tuple: StoryTuple,
    rng: random.Random,
    per_sentence: int = 1,
) -> list[TrainingExample]:
    """Mask a random contiguous token span of each sentence, ``per_sentence`` times.

    Span length is uniform over {1..token count} and the start position is
    uniform over valid starts. The masked span is cut from the raw sentence
    string, so substituting the target back into the marker reproduces the
    sentence byte-for-byte. The prompt carries the title, the surrounding
    sentences, and the target words not yet used before the masked sentence.
    """
    if per_sentence < 1:
        raise ValueError("per_sentence must be >= 1")
    story = story_tuple.story
    examples = []
    for i, sentence in enumerate(story.sentences):
        spans = text.raw_token_spans(sentence)
        if not spans:
            continue
        unused = _unused_before(story_tuple, i)
        for _ in range(per_sentence):
            length = rng.randint(1, len(spans))
            start = rng.randint(0, len(spans) - length)
            a = spans[start].start
            b = spans[start + length - 1].end
            masked = sentence[:a] + MASK + sentence[b:]
            context = list(story.sentences)
            context[i] = masked
            input_text = (
                f"title: {_prompt_title(story.title)}"
                f" | words: {', '.join(unused)}"
                f" | story: {' '.join(context)}"
            )
            examples.append(
                TrainingExample(task="infill", input_text=input_text, target_text=sentence[a:b])
            )
    return examples


def write_examples(examples: Iterable[TrainingExample], sink: IO[str]) -> int:
    """Write newline-delimited JSON records; returns the record count."""
    n = 0
    for ex in examples:
        sink.write(
            json.dumps(
                {"task": ex.task, "input": ex.input_text, "target": ex.target_text},
                ensure_ascii=False,
            )
        )
        sink.write("\n")
        n += 1
    return n


def read_examples(source: IO[str]) -> list[TrainingExample]:
    examples = []
    for line in source:
        line = line.strip()
        if not line:
            continue
        record = json.loads(line)
        examples.append(
            TrainingExample(
                task=record["task"], input_text=record["input"], target_text=record["target"]
            )
        )
    return examples
