"""
Decoding noisy phoneme posteriors with a lexicon
================================================

Synthetic CTC posteriorgrams stand in for an acoustic model.  We decode
them greedily, with an open-vocabulary beam search guided by the phoneme
LM, and with the beam restricted to a pronunciation lexicon.  A paired
bootstrap then estimates how often the lexicon decoder wins.
"""

from plmdecode import ctc, lm
from plmdecode.data_io import default_labels, reference_labels, similarity_confusion, synth_posteriors
from plmdecode.evaluate import bootstrap_compare, edit_distance, wer
from plmdecode.lexicon import build_prefix_tree
from plmdecode.synthetic import LanguageFamily

fam = LanguageFamily(n_languages=1, n_words=30, seed=11)
L = fam.languages[0]
A = fam.alphabet()
lex = L.lexicon(A)

train = L.corpus(A, 60, seed=0)
p = lm.train(train.sequences(), A, lm.TrainConfig(embed_dim=16, hidden_dim=48, lr=1e-2,
                                                  max_epochs=6, batch_size=4))
trie = build_prefix_tree(lex, train.word_counts())
bound = ctc.BoundLM(p, A, L.name)

# similar phonemes are confused with each other more often than random ones
labels = default_labels(L.phonemes)
conf = similarity_confusion(labels, fam.phoneme_classes(), leak=0.05)

utts = list(L.corpus(A, 50, seed=99))
for noise in (0.2, 0.4):
    pairs = {"greedy": [], "open": [], "lexicon": []}
    for k, u in enumerate(utts):
        post = synth_posteriors(reference_labels(A, u.symbols), labels, 3, noise, 0.05, conf, seed=k)
        for mode in pairs:
            r = ctc.decode(post, bound, ctc.DecodeConfig(mode=mode), trie)
            pairs[mode].append((u.words, r.words))
    print(f"noise {noise}: " + ", ".join(f"{m} WER {wer(v):.1f}" for m, v in pairs.items()))
    e_lex = [edit_distance(r, h) for r, h in pairs["lexicon"]]
    e_open = [edit_distance(r, h) for r, h in pairs["open"]]
    print(f"  P(lexicon better than open) = {bootstrap_compare(e_lex, e_open, 10_000, seed=0):.3f}")

# one example, showing the open decoder inventing a word the lexicon forbids
for u, (ref, hyp) in zip(utts, pairs["open"]):
    if any(w not in lex for w in hyp):
        print("reference:", " ".join(ref))
        print("open     :", " ".join(hyp))
        break
