"""Regenerate the demo QA set: each answer buried in a long padded document, plus a distractor that shares question words."""
import json
import random
from pathlib import Path

HERE = Path(__file__).parent
random.seed(4)
facts = [
 ("q1","Which river carries the most water of any river?","The Amazon carries more water than any other river on Earth.",
  "The Nile is often called the longest river, and many river guides ask which river carries the most water of any river in Africa."),
 ("q2","In which year did Marie Curie win the chemistry prize?","Curie won the Nobel prize in chemistry in 1911.",
  "Marie Curie first won a prize in physics in 1903, a year before her chemistry work became famous."),
 ("q3","How high is the summit of Mount Everest?","The summit of Everest stands 8849 metres above sea level.",
  "Mount Everest base camp is high, but the summit of nearby Lhotse is lower than Everest."),
 ("q4","Which dynasty built most of the surviving Great Wall?","Most of the surviving wall was built by the Ming dynasty.",
  "The Qin dynasty built the first Great Wall, but little of that wall is surviving today."),
 ("q5","What is the deepest point of the Pacific Ocean?","The Mariana Trench is the deepest point in the ocean.",
  "The Pacific Ocean point of Nemo is the most remote point, far from any deepest trench."),
 ("q6","Who invented the movable type printing press in Europe?","Johannes Gutenberg invented the printing press around 1440.",
  "In Europe, movable type printing press history also credits Laurens Coster in some Dutch towns."),
 ("q7","What is the great red spot on Jupiter?","The great red spot is a giant storm larger than Earth.",
  "Jupiter has a great many moons, and the red spot on Mars is sometimes confused with it."),
 ("q8","Which colours of light does chlorophyll absorb?","Chlorophyll absorbs mostly red and blue light.",
  "Chlorophyll reflects green light, which is why leaves look green to the colours our eyes see."),
 ("q9","Which planet is closest to the Sun?","Mercury orbits closer to the Sun than any other planet.",
  "Venus is the planet closest to Earth and the hottest planet near the Sun."),
 ("q10","What gas do plants release during photosynthesis?","During photosynthesis plants release oxygen into the air.",
  "Plants take in carbon dioxide gas, and some plants release scents during the day."),
 ("q11","Who wrote the play Hamlet?","Hamlet was written by William Shakespeare around 1600.",
  "The play Hamlet was wrote about by many critics, and who played Hamlet first is debated."),
 ("q12","What is the boiling point of water at sea level?","At sea level water boils at 100 degrees Celsius.",
  "The freezing point of water at sea level is zero, and the boiling point of oil is much higher."),
]
filler = ["Historians and scientists have written about this subject for a very long time.",
 "Many visitors travel great distances every year to learn more about it.",
 "Local museums hold collections of maps, letters and photographs.",
 "Several documentaries have been filmed on the topic in recent decades.",
 "Teachers often use it as an example in introductory lessons.",
 "Records from earlier centuries are incomplete and sometimes disagree.",
 "Modern instruments have made new measurements possible.",
 "The surrounding region has a rich and varied history of its own.",
 "Debates continue among experts about the finer details.",
 "Popular books tend to simplify the story for general readers."]
def pad(n):
    return [random.choice(filler) for _ in range(n)]
qa, corpus = [], []
for i,(qid,q,a,d) in enumerate(facts):
    qa.append({"id":qid,"question":q,"answers":[a]})
    # the answer sits deep inside a long document, so chunk size decides what a chunk carries
    pos = random.randint(10, 40)
    body = pad(pos) + [a] + pad(random.randint(10, 40))
    corpus.append({"id":f"d{i+1}","text":" ".join(body)})
    corpus.append({"id":f"x{i+1}","text":" ".join(pad(2)+[d]+pad(2))})
with open(HERE / "qa.jsonl", "w") as f:
    for r in qa: f.write(json.dumps(r)+"\n")
with open(HERE / "corpus.jsonl", "w") as f:
    for r in corpus: f.write(json.dumps(r)+"\n")
