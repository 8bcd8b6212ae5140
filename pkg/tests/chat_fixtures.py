"""Hand-built CHAT fixtures with expected participant token lists.

Each entry is ``(name, text, expected, kwargs)``; ``expected`` is the tuple
of interventions obtained by tracing the documented cleaning rules by hand.
``MALFORMED`` entries are ``(name, text, line)`` with the line the error
must point at.
"""

H = "@UTF8\n@Begin\n@Languages:\teng\n@Participants:\tPAR Participant, INV Investigator\n"
E = "@End\n"

FIXTURES = [
    ("single_utterance",
     H + "*PAR:\tthe boy is on the stool .\n" + E,
     (("the", "boy", "is", "on", "the", "stool"),), {}),
    ("investigator_turns_removed",
     H + "*INV:\ttell me what you see .\n*PAR:\ta cookie jar .\n*INV:\tmhm .\n" + E,
     (("a", "cookie", "jar"),), {}),
    ("only_investigator",
     H + "*INV:\tjust tell me .\n*INV:\tokay .\n" + E,
     (), {}),
    ("headers_only",
     H + "@ID:\teng|Pitt|PAR|65;|female|ProbableAD||Participant|||\n@Media:\tx, audio\n" + E,
     (), {}),
    ("dependent_tiers_ignored",
     H + "*PAR:\tshe is washing dishes .\n%mor:\tpro|she aux|be&3S part|wash-PRESP n|dish-PL .\n"
         "%gra:\t1|3|SUBJ 2|3|AUX 3|0|ROOT 4|3|OBJ 5|3|PUNCT\n" + E,
     (("she", "is", "washing", "dishes"),), {}),
    ("continuation_line",
     H + "*PAR:\tthe water is running\n\tover the sink .\n" + E,
     (("the", "water", "is", "running", "over", "the", "sink"),), {}),
    ("continuation_with_spaces",
     H + "*PAR:\tand the mother\n    is drying a plate .\n" + E,
     (("and", "the", "mother", "is", "drying", "a", "plate"),), {}),
    ("retrace_kept",
     H + "*PAR:\tthe boy [//] the boy is falling .\n*INV:\tmhm .\n" + E,
     (("the", "boy", "the", "boy", "is", "falling"),), {}),
    ("retrace_dropped_word",
     H + "*PAR:\the [/] he is falling .\n" + E,
     (("he", "is", "falling"),), {"keep_retraced": False}),
    ("retrace_dropped_group",
     H + "*PAR:\t<the boy> [//] the girl is laughing .\n" + E,
     (("the", "girl", "is", "laughing"),), {"keep_retraced": False}),
    ("angle_group_kept",
     H + "*PAR:\t<the little> [/] the little girl .\n" + E,
     (("the", "little", "the", "little", "girl"),), {}),
    ("fillers_dropped",
     H + "*PAR:\t&uh the &um stool is &-uh tipping .\n" + E,
     (("the", "stool", "is", "tipping"),), {}),
    ("events_dropped",
     H + "*PAR:\t&=laughs he fell &=coughs down .\n" + E,
     (("he", "fell", "down"),), {}),
    ("unintelligible_dropped",
     H + "*PAR:\txxx the yyy cookies www .\n" + E,
     (("the", "cookies"),), {}),
    ("all_unintelligible_utterance",
     H + "*PAR:\txxx .\n*PAR:\tthe kitchen .\n" + E,
     (("the", "kitchen"),), {}),
    ("terminator_codes",
     H + "*PAR:\tand then +...\n*PAR:\tshe is +/.\n*PAR:\t+< yes .\n" + E,
     (("and", "then"), ("she", "is"), ("yes",)), {}),
    ("omitted_words",
     H + "*PAR:\tthe boy 0is taking 0a cookie .\n" + E,
     (("the", "boy", "taking", "cookie"),), {}),
    ("bracket_codes_removed",
     H + "*PAR:\tthe cookers [: cookies] [* s:r] are falling [+ gram] .\n" + E,
     (("the", "cookers", "are", "falling"),), {}),
    ("nested_brackets",
     H + "*PAR:\tthe jar [% note [with] inner] is open .\n" + E,
     (("the", "jar", "is", "open"),), {}),
    ("form_markers_and_parens",
     H + "*PAR:\tthe bi@b thing (be)cause it's fallin(g) .\n" + E,
     (("the", "bi", "thing", "because", "it's", "falling"),), {}),
    ("lengthening_and_compounds",
     H + "*PAR:\tso:: the ice+cream is co:ld .\n" + E,
     (("so", "the", "ice", "cream", "is", "cold"),), {}),
    ("uppercase_and_punctuation",
     H + "*PAR:\tThe Mother, she said Oh ! .\n" + E,
     (("the", "mother", "she", "said", "oh"),), {}),
    ("timing_bullets",
     H + "*PAR:\tthe girl is reaching . \x151200_3400\x15\n" + E,
     (("the", "girl", "is", "reaching"),), {}),
    ("pauses_dropped",
     H + "*PAR:\tthe (.) boy (..) is (...) up .\n" + E,
     (("the", "boy", "is", "up"),), {}),
    ("mhm_survives",
     H + "*PAR:\tmhm .\n" + E,
     (("mhm",),), {}),
]

MALFORMED = [
    ("dependent_before_utterance", "@Begin\n%mor:\tdet|the n|boy .\n*PAR:\tthe boy .\n", 2),
    ("unknown_prefix", "@Begin\n*PAR:\tthe boy .\n#comment here\n", 3),
    ("bad_speaker_tier", "@Begin\n*PAR:\tok .\n*PARTICIPANT the boy\n", 3),
    ("continuation_first", "\tthe boy .\n", 1),
    ("lowercase_speaker", "@Begin\n\n*par:\tthe boy .\n", 3),
]
