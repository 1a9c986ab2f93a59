#!/usr/bin/env python3
"""Regenerates the synthetic CONLL-U fixtures under fixtures/.

The output is deterministic; rerunning rewrites identical files.
"""
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))


def row(i, form, lemma, upos, xpos, feats, head, deprel, misc="_"):
    return "\t".join([str(i), form, lemma, upos, xpos, feats or "_", str(head), deprel, "_", misc])


def sentence(sent_id, rows, text=None):
    out = [f"# sent_id = {sent_id}"]
    if text is not None:
        out.append(f"# text = {text}")
    out.extend(rows)
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- English mini

NOUNS = [
    ("dog", "dogs"), ("cat", "cats"), ("teacher", "teachers"), ("farmer", "farmers"),
    ("child", "children"), ("bird", "birds"), ("student", "students"), ("driver", "drivers"),
    ("doctor", "doctors"), ("painter", "painters"), ("sailor", "sailors"), ("baker", "bakers"),
]
OBJECTS = [
    ("ball", "balls"), ("book", "books"), ("letter", "letters"), ("apple", "apples"),
    ("door", "doors"), ("song", "songs"), ("car", "cars"), ("picture", "pictures"),
]
# lemma, 3sg present, plural present, past
VERBS = [
    ("chase", "chases", "chase", "chased"), ("open", "opens", "open", "opened"),
    ("paint", "paints", "paint", "painted"), ("watch", "watches", "watch", "watched"),
    ("carry", "carries", "carry", "carried"), ("push", "pushes", "push", "pushed"),
    ("like", "likes", "like", "liked"), ("clean", "cleans", "clean", "cleaned"),
    ("take", "takes", "take", "took"), ("see", "sees", "see", "saw"),
    ("find", "finds", "find", "found"), ("throw", "throws", "throw", "threw"),
]
PRONOUNS = [
    ("He", "he", "Case=Nom|Gender=Masc|Number=Sing|Person=3|PronType=Prs", "Sing"),
    ("She", "she", "Case=Nom|Gender=Fem|Number=Sing|Person=3|PronType=Prs", "Sing"),
    ("They", "they", "Case=Nom|Number=Plur|Person=3|PronType=Prs", "Plur"),
]
ADVERBS = ["again", "quickly", "often", "slowly"]


def english_sentence(rng, idx):
    past = rng.random() < 0.55
    use_pron = rng.random() < 0.3
    use_adv = rng.random() < 0.35
    rows = []
    i = 1
    # subject
    if use_pron:
        form, lemma, feats, num = rng.choice(PRONOUNS)
        rows.append(("subj", form, lemma, "PRON", "PRP", feats, "nsubj"))
    else:
        det_def = rng.random() < 0.6
        num = "Plur" if rng.random() < 0.4 else "Sing"
        sg, pl = rng.choice(NOUNS)
        if det_def:
            rows.append(("det_s", "The", "the", "DET", "DT", "Definite=Def|PronType=Art", "det"))
        elif num == "Sing":
            rows.append(("det_s", "A", "a", "DET", "DT", "Definite=Ind|PronType=Art", "det"))
        else:
            rows.append(("det_s", "Some", "some", "DET", "DT", "PronType=Ind", "det"))
        rows.append(("subj", sg if num == "Sing" else pl, sg, "NOUN", "NN" if num == "Sing" else "NNS",
                     f"Number={num}", "nsubj"))
    lemma, sg3, plv, pastv = rng.choice(VERBS)
    if past:
        vform, vfeats, xpos = pastv, "Mood=Ind|Tense=Past|VerbForm=Fin", "VBD"
    elif num == "Sing":
        vform, vfeats, xpos = sg3, "Mood=Ind|Number=Sing|Person=3|Tense=Pres|VerbForm=Fin", "VBZ"
    else:
        vform, vfeats, xpos = plv, "Mood=Ind|Number=Plur|Person=3|Tense=Pres|VerbForm=Fin", "VBP"
    rows.append(("root", vform, lemma, "VERB", xpos, vfeats, "root"))
    onum = "Plur" if rng.random() < 0.5 else "Sing"
    osg, opl = rng.choice(OBJECTS)
    if rng.random() < 0.5:
        rows.append(("det_o", "the", "the", "DET", "DT", "Definite=Def|PronType=Art", "det"))
    elif onum == "Sing":
        rows.append(("det_o", "a", "a", "DET", "DT", "Definite=Ind|PronType=Art", "det"))
    else:
        rows.append(("det_o", "these", "this", "DET", "DT", "Number=Plur|PronType=Dem", "det"))
    rows.append(("obj", osg if onum == "Sing" else opl, osg, "NOUN", "NN" if onum == "Sing" else "NNS",
                 f"Number={onum}", "obj"))
    if use_adv:
        rows.append(("adv", rng.choice(ADVERBS), None, "ADV", "RB", None, "advmod"))
    rows.append(("punct", ".", ".", "PUNCT", ".", None, "punct"))

    ids = {}
    for n, r in enumerate(rows, start=1):
        ids[r[0]] = n
    heads = {
        "det_s": ids["subj"], "subj": ids["root"], "root": 0, "det_o": ids["obj"],
        "obj": ids["root"], "adv": ids["root"], "punct": ids["root"],
    }
    out = []
    for n, (role, form, lemma, upos, xpos, feats, deprel) in enumerate(rows, start=1):
        misc = "SpaceAfter=No" if n == len(rows) - 1 else "_"
        out.append(row(n, form, lemma or form, upos, xpos, feats, heads[role], deprel, misc))
    words = [r[1] for r in rows]
    text = " ".join(words[:-1]) + "."
    return text, out


def write_english():
    rng = random.Random(20220501)
    seen = set()
    chunks = []
    idx = 0
    while len(chunks) < 360:
        text, rows = english_sentence(rng, idx)
        if text in seen:
            continue
        seen.add(text)
        idx += 1
        chunks.append(sentence(f"mini-{idx:04d}", rows, text))
    path = os.path.join(HERE, "mini", "en_mini-ud.conllu")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("# newdoc id = mini\n")
        f.write("\n".join(chunks))


# ------------------------------------------------------- curated two-language

DE_NOUNS = {
    ("Nom", "Sing"): ["Hund", "Mann", "Baum", "Vogel", "Tisch", "Lehrer"],
    ("Nom", "Plur"): ["Hunde", "Männer", "Bäume", "Vögel", "Tische", "Lehrerinnen"],
    ("Acc", "Sing"): ["Hund", "Mann", "Baum", "Vogel", "Tisch", "Lehrer"],
    ("Acc", "Plur"): ["Hunde", "Männer", "Bäume", "Vögel", "Tische", "Lehrerinnen"],
}
DE_VERBS = {
    ("Sing", "Pres"): ["läuft", "schläft", "wartet", "singt"],
    ("Plur", "Pres"): ["laufen", "schlafen", "warten", "singen"],
    ("Sing", "Past"): ["lief", "schlief", "wartete", "sang"],
    ("Plur", "Past"): ["liefen", "schliefen", "warteten", "sangen"],
}
FI_NOUNS = {
    ("Nom", "Sing"): ["talo", "koira", "kirja", "metsä", "järvi"],
    ("Nom", "Plur"): ["talot", "koirat", "kirjat", "metsät", "järvet"],
    ("Ine", "Sing"): ["talossa", "koirassa", "kirjassa", "metsässä", "järvessä"],
    ("Ine", "Plur"): ["taloissa", "koirissa", "kirjoissa", "metsissä", "järvissä"],
    ("Ela", "Sing"): ["talosta", "koirasta", "kirjasta", "metsästä", "järvestä"],
    ("Ela", "Plur"): ["taloista", "koirista", "kirjoista", "metsistä", "järvistä"],
    ("Ess", "Sing"): ["talona", "koirana"],
}
FI_VERBS = {
    "Sing": ["on", "näkyy", "kuuluu", "seisoo"],
    "Plur": ["ovat", "näkyvät", "kuuluvat", "seisovat"],
}


def curated_rows(noun, noun_feats, verb, verb_feats):
    return [
        row(1, noun, noun.lower(), "NOUN", "_", noun_feats, 2, "nsubj"),
        row(2, verb, verb, "VERB", "_", verb_feats, 0, "root", "SpaceAfter=No"),
        row(3, ".", ".", "PUNCT", "_", None, 2, "punct"),
    ]


def write_curated():
    os.makedirs(os.path.join(HERE, "curated"), exist_ok=True)

    # German: Case {Nom, Acc}, Number {Sing, Plur}, Tense {Pres, Past}
    chunks, seen = [], set()
    combos = [(c, n, t) for c in ("Nom", "Acc") for n in ("Sing", "Plur") for t in ("Pres", "Past")]
    k = 0
    for rep in range(6):
        for case, num, tense in combos:
            noun = DE_NOUNS[(case, num)][(rep + k) % 6]
            verb = DE_VERBS[(num, tense)][(rep * 3 + k) % 4]
            k += 1
            text = f"{noun} {verb}."
            if text in seen:
                continue
            seen.add(text)
            rows = curated_rows(noun, f"Case={case}|Gender=Masc|Number={num}", verb,
                                f"Number={num}|Person=3|Tense={tense}")
            chunks.append(sentence(f"de-{len(chunks) + 1:03d}", rows, text))
    with open(os.path.join(HERE, "curated", "de_tiny-ud.conllu"), "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(chunks))

    # Finnish: Case {Nom, Ine, Ela} plus 2x Ess (below min_class_count), Number {Sing, Plur},
    # Tense only Pres (single-value, filtered).
    chunks, seen = [], set()
    combos = [(c, n) for c in ("Nom", "Ine", "Ela") for n in ("Sing", "Plur")]
    k = 0
    for rep in range(5):
        for case, num in combos:
            noun = FI_NOUNS[(case, num)][(rep + k) % 5]
            verb = FI_VERBS[num][(rep + 2 * k) % 4]
            k += 1
            text = f"{noun} {verb}."
            if text in seen:
                continue
            seen.add(text)
            rows = curated_rows(noun, f"Case={case}|Number={num}", verb,
                                f"Mood=Ind|Number={num}|Person=3|Tense=Pres|VerbForm=Fin")
            chunks.append(sentence(f"fi-{len(chunks) + 1:03d}", rows, text))
    for noun in FI_NOUNS[("Ess", "Sing")]:
        rows = curated_rows(noun, "Case=Ess|Number=Sing", "on",
                            "Mood=Ind|Number=Sing|Person=3|Tense=Pres|VerbForm=Fin")
        chunks.append(sentence(f"fi-{len(chunks) + 1:03d}", rows, f"{noun} on."))
    with open(os.path.join(HERE, "curated", "fi_tiny-ud.conllu"), "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(chunks))


if __name__ == "__main__":
    write_english()
    write_curated()
