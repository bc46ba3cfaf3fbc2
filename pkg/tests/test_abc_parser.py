"""Parser behaviour: durations, ornaments, diagnostics, lyrics."""

from fractions import Fraction

import pytest

from barscore.abc_parser import (
    ParseResult,
    parse_lyric_syllables,
    parse_or_raise,
    parse_score,
)
from barscore.score import Pitch, ScoreError

HEADER = "X:1\nM:4/4\nL:1/8\nK:C\n"


def first_bar(text: str):
    score = parse_or_raise(HEADER + text + "\n")
    return score.voices[0].bars[0]


def lengths(text: str):
    return [e.length for e in first_bar(text).events]


class TestDurations:
    @pytest.mark.parametrize(
        "token,expected",
        [
            ("C", Fraction(1)),
            ("C2", Fraction(2)),
            ("C/", Fraction(1, 2)),
            ("C//", Fraction(1, 4)),
            ("C/2", Fraction(1, 2)),
            ("C/4", Fraction(1, 4)),
            ("C3/2", Fraction(3, 2)),
            ("C16", Fraction(16)),
        ],
    )
    def test_note_length(self, token, expected):
        assert lengths(token + " |") == [expected]

    def test_zero_duration_is_an_error(self):
        result = parse_score(HEADER + "C0 |\n")
        assert result.score is None
        assert any("malformed duration" in d.message for d in result.errors)

    def test_rest_lengths(self):
        bar = first_bar("z2 x2 z |")
        assert [e.kind for e in bar.events] == ["rest"] * 3
        assert [e.length for e in bar.events] == [Fraction(2), Fraction(2), Fraction(1)]

    def test_multibar_rest_spans_whole_bars(self):
        # Z2 in 4/4 with L:1/8 is sixteen unit lengths
        bar = first_bar("Z2 |")
        assert bar.events[0].kind == "rest"
        assert bar.events[0].length == Fraction(16)

    def test_spacer_consumes_no_time(self):
        assert lengths("C4 y2 D4 |") == [Fraction(4), Fraction(4)]


class TestPitches:
    def test_octave_marks(self):
        bar = first_bar("C, C c c' |")
        assert [p.octave for (p,) in (e.pitches for e in bar.events)] == [-1, 0, 1, 2]

    def test_accidentals(self):
        bar = first_bar("^C _D =E ^^F __G |")
        accs = [e.pitches[0].accidental for e in bar.events]
        assert accs == ["^", "_", "=", "^^", "__"]

    def test_letters_normalised_upper(self):
        bar = first_bar("c |")
        assert bar.events[0].pitches[0] == Pitch(letter="C", accidental=None, octave=1)


class TestTuplets:
    def test_triplet_in_duple_time(self):
        # three notes in the time of two
        assert lengths("(3CDE C |") == [Fraction(2, 3)] * 3 + [Fraction(1)]

    def test_duplet_in_compound_time(self):
        score = parse_or_raise("X:1\nM:6/8\nL:1/8\nK:C\n(2CD E |\n")
        evs = score.voices[0].bars[0].events
        assert [e.length for e in evs] == [Fraction(3, 2), Fraction(3, 2), Fraction(1)]

    def test_explicit_q_and_r(self):
        # (3:2:2 stretches only the next two notes
        assert lengths("(3:2:2CD E |") == [Fraction(2, 3), Fraction(2, 3), Fraction(1)]

    def test_quintuplet_default_depends_on_meter(self):
        duple = lengths("(5CDEFG |")
        assert duple == [Fraction(2, 5)] * 5
        compound = parse_or_raise("X:1\nM:6/8\nL:1/8\nK:C\n(5CDEFG G |\n")
        evs = compound.voices[0].bars[0].events
        assert evs[0].length == Fraction(3, 5)


class TestBrokenRhythm:
    def test_long_short(self):
        assert lengths("C>D |") == [Fraction(3, 2), Fraction(1, 2)]

    def test_short_long(self):
        assert lengths("C<D |") == [Fraction(1, 2), Fraction(3, 2)]

    def test_double_arrow(self):
        assert lengths("C>>D |") == [Fraction(7, 4), Fraction(1, 4)]

    def test_applies_to_written_lengths(self):
        assert lengths("C2>D2 |") == [Fraction(3), Fraction(1)]


class TestChords:
    def test_chord_event(self):
        bar = first_bar("[CEG]4 |")
        ev = bar.events[0]
        assert ev.kind == "chord"
        assert [p.letter for p in ev.pitches] == ["C", "E", "G"]
        assert ev.length == Fraction(4)

    def test_inner_and_outer_lengths_multiply(self):
        assert lengths("[C2E2]2 |") == [Fraction(4)]

    def test_single_note_chord_is_a_note(self):
        assert first_bar("[C]2 |").events[0].kind == "note"

    def test_unequal_lengths_warn(self):
        result = parse_score(HEADER + "[C2E4]8 |\n")
        assert result.ok
        assert any("unequal length" in d.message for d in result.warnings)

    def test_unclosed_chord_warns(self):
        result = parse_score(HEADER + "[CEG8 |\n")
        assert result.ok
        assert any("unclosed chord" in d.message for d in result.warnings)


class TestTiesAndSlurs:
    def test_tie_marks_the_left_note(self):
        bar = first_bar("C4- C4 |")
        assert bar.events[0].tie
        assert not bar.events[1].tie

    def test_slur_marks_both_ends(self):
        bar = first_bar("(CD)E |")
        assert bar.events[0].slur_open
        assert bar.events[1].slur_close
        assert not bar.events[2].slur_open


class TestPassthroughText:
    def test_chord_symbols_skipped(self):
        assert lengths('"Am"C4 D4 |') == [Fraction(4), Fraction(4)]

    def test_decorations_and_grace_notes_skipped(self):
        assert lengths("!trill!C4 {ag}D4 |") == [Fraction(4), Fraction(4)]

    def test_inline_field_skipped(self):
        assert lengths("[K:D]C8 |") == [Fraction(8)]


class TestDiagnostics:
    def test_overfull_bar_warns_with_both_sides(self):
        result = parse_score(HEADER + "C8 D8 |\n")
        assert result.ok
        warning = next(d for d in result.warnings if "overfull" in d.message)
        assert "2 > 1" in warning.message

    def test_missing_key_header(self):
        result = parse_score("X:1\nM:4/4\nC4 |\n")
        assert result.score is None
        assert any(d.message == "missing key header" for d in result.errors)

    def test_non_ascii_music_is_an_error(self):
        result = parse_score(HEADER + "C4 é D4 |\n")
        assert result.score is None
        err = next(d for d in result.errors)
        assert err.message == "non-ascii character"
        assert err.col == 4

    def test_non_ascii_title_only_warns(self):
        result = parse_score("X:1\nT:Café\nM:4/4\nL:1/8\nK:C\nC8 |\n")
        assert result.ok
        assert any(d.message == "non-ascii text" for d in result.warnings)

    def test_line_ending_inside_a_bar_warns(self):
        result = parse_score(HEADER + "C4 D4\n")
        assert result.ok
        assert any("line ends inside a bar" in d.message for d in result.warnings)

    def test_positions_are_one_based(self):
        result = parse_score(HEADER + "C4 | D0 |\n")
        err = result.errors[0]
        assert (err.line, err.col) == (5, 6)

    def test_parse_or_raise_collects_messages(self):
        with pytest.raises(ScoreError, match="missing key header"):
            parse_or_raise("C4 |\n")


class TestHeadersAndVoices:
    def test_default_unit_length_by_meter(self):
        narrow = parse_or_raise("X:1\nM:2/4\nK:C\nC4 |\n")
        assert narrow.headers.unit_length == Fraction(1, 16)
        wide = parse_or_raise("X:1\nM:4/4\nK:C\nC4 |\n")
        assert wide.headers.unit_length == Fraction(1, 8)

    def test_mid_tune_field_kept_as_bar(self):
        score = parse_or_raise(HEADER + "C8 |\nK:D\nD8 |\n")
        bars = score.voices[0].bars
        assert bars[1].is_field
        assert bars[1].source_text == "K:D"

    def test_voice_switching(self):
        score = parse_or_raise(
            "X:1\nM:4/4\nL:1/8\nK:C\nV:1\nC8 |\nV:2\nE8 |\nV:1\nD8 |\n"
        )
        assert [v.id for v in score.voices] == ["1", "2"]
        v1, v2 = score.voices
        assert len(v1.bars) == 2 and len(v2.bars) == 1

    def test_lyrics_attach_to_previous_music_line(self):
        score = parse_or_raise(HEADER + "C4 D4 |\nw: one two\n")
        line = score.voices[0].lyric_lines[0]
        assert (line.bar_start, line.bar_end) == (0, 1)
        assert [s.text for s in line.syllables] == ["one", "two"]

    def test_lyric_before_music_warns(self):
        result = parse_score(HEADER + "w: stray\nC8 |\n")
        assert result.ok
        assert any("lyric line before any music" in d.message for d in result.warnings)

    def test_continuation_backslash_dropped(self):
        score = parse_or_raise(HEADER + "C8 |\\\n")
        assert score.voices[0].bars[0].barline == "|"

    def test_comments_and_blanks_ignored(self):
        score = parse_or_raise(HEADER + "% remark\n\nC8 |\n")
        assert len(score.voices[0].bars) == 1


class TestLyricSyllables:
    def test_hyphen_continues(self):
        syls = parse_lyric_syllables("mor-ning light")
        assert [(s.text, s.continues) for s in syls] == [
            ("mor", True), ("ning", False), ("light", False)
        ]

    def test_melisma_and_skip(self):
        syls = parse_lyric_syllables("day _ * done")
        assert syls[1].melisma and syls[1].text == ""
        assert syls[2].is_skip and not syls[2].melisma

    def test_bar_advance_counts_pipes(self):
        syls = parse_lyric_syllables("one | two || three")
        assert [s.bar_advance for s in syls] == [0, 1, 2]

    def test_tilde_is_a_space(self):
        assert parse_lyric_syllables("my~love")[0].text == "my love"

    def test_escaped_hyphen_is_literal(self):
        syls = parse_lyric_syllables("well\\-worn")
        assert syls[0].text == "well-worn"
        assert not syls[0].continues

    def test_result_api(self):
        result = parse_score(HEADER + "C8 |\n")
        assert isinstance(result, ParseResult)
        assert result.ok and result.errors == [] and result.warnings == []
