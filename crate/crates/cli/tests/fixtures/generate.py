"""Regenerates the end-to-end fixture files in this directory.

Five word-cloud questions, ~200 responses each, exported in a vendor-style
layout (see mapping.toml), plus three annotators' rubric scores.
"""
import csv
import random
from datetime import datetime, timedelta

rng = random.Random(20240108)

QUESTIONS = [
    ("CS1-L02-WC", "Name one thing you want to learn in this course", "reflection", 2, [
        "recursion", "data structures", "algorithms", "how to code", "python", "debugging", "sorting",
        "problem solving", "java", "object oriented programming", "linked lists", "trees", "graphs",
        "big o notation", "web development", "machine learning", "testing", "git", "dynamic programming",
        "hash tables", "memory management", "pointers", "loops", "functions", "classes", "arrays",
        "stacks and queues", "search algorithms", "clean code", "software design"]),
    ("CS1-L04-WC", "What does a variable store?", "conceptual", 4, [
        "a value", "data", "a number", "information", "a reference", "memory location", "a string",
        "an integer", "an object", "the value of an expression", "a piece of data", "a name for a value",
        "a boolean", "state", "a pointer to memory", "input", "a result", "numbers and text", "a float",
        "a list", "a character", "a constant value", "temporary data", "values that change",
        "a memory address", "user input", "program state", "a type and a value", "bits", "contents"]),
    ("CS1-L06-WC", "Which loop would you use to read a file line by line?", "coding", 6, [
        "for loop", "while loop", "for each", "for line in file", "while not eof", "readline loop",
        "iterator", "do while", "for in", "while true with break", "with open and for", "enumerate",
        "list comprehension", "generator", "for loop over lines", "while readline", "foreach loop",
        "a for loop", "a while loop", "for-in loop", "iterate lines", "for each line", "loop until eof",
        "scanner hasnextline", "bufferedreader readline", "stream lines", "read in a loop",
        "for with range", "recursive read", "map over lines"]),
    ("CS1-L08-WC", "Estimate: how many comparisons does binary search need for 1000 items?", "numerical", 8, [
        "10", "about 10", "log n", "log2 1000", "9", "11", "around 10", "ten", "20", "1000", "500",
        "log base 2 of 1000", "less than 10", "roughly 10", "10 comparisons", "about log n", "100",
        "9 or 10", "at most 10", "32", "log(1000)", "3", "7", "12", "approximately 10", "n/2",
        "10ish", "like 10", "under 11", "o(log n)"]),
    ("CS1-L10-WC", "One word describing how today's lecture felt", "reflection", 10, [
        "good", "confusing", "interesting", "fun", "helpful", "clear", "fast", "hard", "great", "okay",
        "informative", "challenging", "engaging", "useful", "long", "slow", "exciting", "cool",
        "overwhelming", "fine", "productive", "awesome", "chill", "tough", "insightful", "nice",
        "boring", "mind blowing", "enjoyable", "difficult"]),
]

JUNK = ["asdf", "idk", "lol", "?", "no", "hi", "jkjk", "qwerty", "...", "nothing", "pass", "xd",
        "aaaa", "hmm", "yes", "sdfgh", "bruh", "k", "zzz", "meh", "hello", "69", "whatever", "lmao"]

STUDENTS = [f"stu{i:03d}" for i in range(1, 61)]
# a handful who mostly type junk in later lectures
SLACKERS = {"stu007", "stu023", "stu041", "stu052"}

def zipf_choice(options):
    weights = [1.0 / (i + 1) ** 1.1 for i in range(len(options))]
    return rng.choices(options, weights=weights, k=1)[0]

def garble(text):
    r = rng.random()
    if r < 0.15:
        return text.upper()
    if r < 0.25:
        return "  " + text.title() + " "
    return text

rows = []
base = datetime(2024, 1, 8, 10, 0, 0)
for qid, _, _, lecture, vocab in QUESTIONS:
    day = base + timedelta(days=(lecture - 1) * 2)
    for student in STUDENTS:
        if rng.random() < 0.08:
            continue
        n_answers = 3 + (1 if rng.random() < 0.35 else 0)
        for _ in range(n_answers):
            slacking = student in SLACKERS and lecture >= 6
            junk = rng.random() < (0.75 if slacking else 0.07)
            text = rng.choice(JUNK) if junk else zipf_choice(vocab)
            live = rng.random() < 0.8
            ts = day + timedelta(seconds=rng.randint(0, 3000)) if live else day + timedelta(days=rng.randint(1, 6), seconds=rng.randint(0, 86000))
            rows.append([qid, student, garble(text), "live" if live else "recording", ts.strftime("%m/%d/%Y %H:%M:%S")])

rows.sort(key=lambda r: (r[0], datetime.strptime(r[4], "%m/%d/%Y %H:%M:%S"), r[1]))
with open("responses.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["Poll ID", "Participant", "Answer", "Session", "Time"])
    w.writerows(rows)

with open("questions.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["question_id", "text", "category", "lecture_number", "poll_kind"])
    for qid, text, cat, lecture, _ in QUESTIONS:
        w.writerow([qid, text, cat, lecture, "word_cloud"])

def norm(t):
    return " ".join(t.casefold().split())

labels = []
stamp = "2024-03-01T12:00:00Z"
for qid, _, _, _, vocab in QUESTIONS:
    seen = sorted({norm(r[2]) for r in rows if r[0] == qid})
    for text in seen:
        is_junk = text in {norm(j) for j in JUNK}
        if not is_junk and rng.random() < 0.5:
            continue
        for annotator in ["ann-a", "ann-b", "ann-c"]:
            if is_junk:
                score = rng.choice([1, 1, 2, 2, 3]) if rng.random() < 0.9 else 4
            else:
                score = rng.choice([4, 5, 5]) if rng.random() < 0.9 else 3
            labels.append([annotator, qid, text, score, stamp])

with open("labels.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["annotator_id", "question_id", "normalized_text", "score", "labeled_at"])
    w.writerows(labels)
print(len(rows), "responses;", len(labels), "labels")
