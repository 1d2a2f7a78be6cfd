"""Regenerates the 4-class news-style fixture corpus (deterministic)."""

import json
import random
from pathlib import Path

CLASSES = {
    "World": {
        "subjects": ["the prime minister", "rebel forces", "un envoys", "the foreign ministry", "border guards",
                     "opposition leaders", "the european union", "peace negotiators", "the embassy", "election monitors"],
        "verbs": ["condemned", "signed", "rejected", "postponed", "called for", "negotiated", "protested", "announced"],
        "objects": ["a ceasefire", "the new sanctions", "a disputed vote", "the border agreement", "refugee aid",
                    "a state visit", "the peace treaty", "the coalition talks", "military drills", "a referendum"],
        "places": ["in geneva", "near the capital", "in the region", "at the summit", "across the border", "in baghdad",
                   "in nairobi", "in kabul", "after the talks", "before parliament"],
    },
    "Sports": {
        "subjects": ["the striker", "the home side", "the defending champion", "the coach", "the rookie pitcher",
                     "the national team", "the goalkeeper", "the captain", "the league leaders", "the sprinter"],
        "verbs": ["won", "lost", "clinched", "scored in", "dominated", "was benched for", "celebrated", "forfeited"],
        "objects": ["the final", "a penalty shootout", "the title race", "the opening match", "a hat trick",
                    "the playoff series", "the world cup qualifier", "the grand slam", "overtime", "the derby"],
        "places": ["at the stadium", "on home turf", "in extra time", "at wimbledon", "in the second half",
                   "before a sellout crowd", "on the road", "in the semifinal", "at the olympics", "this season"],
    },
    "Business": {
        "subjects": ["the central bank", "shareholders", "the retailer", "oil prices", "the airline",
                     "the chief executive", "investors", "the automaker", "quarterly profits", "the merger"],
        "verbs": ["rose after", "fell on", "cut", "raised", "reported", "beat forecasts for", "slashed", "acquired"],
        "objects": ["interest rates", "the dividend", "annual earnings", "its workforce", "a rival chain",
                    "the bond market", "consumer spending", "the stock price", "its outlook", "a takeover bid"],
        "places": ["on wall street", "in early trading", "this quarter", "amid inflation fears", "in tokyo",
                   "after the report", "on the exchange", "for the fiscal year", "in frankfurt", "at the close"],
    },
    "Sci/Tech": {
        "subjects": ["researchers", "the software giant", "astronomers", "the chipmaker", "a startup",
                     "engineers", "the space agency", "hackers", "the smartphone maker", "biologists"],
        "verbs": ["unveiled", "discovered", "patched", "launched", "released", "tested", "sequenced", "open sourced"],
        "objects": ["a new processor", "a distant planet", "a security flaw", "the satellite", "an operating system update",
                    "a battery design", "the genome", "a search engine", "the browser", "a robot prototype"],
        "places": ["in the lab", "at the conference", "in silicon valley", "on the web", "in orbit",
                   "in a new study", "for developers", "on mars", "in beta", "this week"],
    },
}
FILLER = ["officials said", "reports said", "on monday", "on friday", "according to sources", "late on tuesday",
          "analysts noted", "it emerged", "witnesses said", "sources confirmed"]


def pick(rng, name, spec, slot, leak):
    if rng.random() < leak:
        other = rng.choice([c for c in CLASSES if c != name])
        return rng.choice(CLASSES[other][slot])
    return rng.choice(spec[slot])


def sentence(rng, name, spec):
    parts = [
        pick(rng, name, spec, "subjects", 0.25),
        pick(rng, name, spec, "verbs", 0.35),
        pick(rng, name, spec, "objects", 0.35),
        pick(rng, name, spec, "places", 0.6),
    ]
    if rng.random() < 0.5:
        parts.append(rng.choice(FILLER))
    return " ".join(parts)


def main():
    rng = random.Random(7)
    names = list(CLASSES)
    seen, rows = set(), []
    while len(rows) < 3600:
        label = names[len(rows) % len(names)]
        text = sentence(rng, label, CLASSES[label])
        if text not in seen:
            seen.add(text)
            rows.append({"text": text, "label": label})
    rng.shuffle(rows)
    out = Path(__file__).parent
    (out / "taxonomy.txt").write_text("".join(n + "\n" for n in names))
    for name, part in [("pool.jsonl", rows[:3000]), ("test.jsonl", rows[3000:])]:
        (out / name).write_text("".join(json.dumps(r) + "\n" for r in part))


if __name__ == "__main__":
    main()
