"""
Adapting to a new language with little data
===========================================

A model pretrained on six related languages is extended with a seventh
language's phonemes and fine-tuned on a fraction of its corpus.  We
compare it with a monolingual model trained from scratch on the same
fraction.  The pretrained model helps most when the fraction is small.
"""

from plmdecode import lm
from plmdecode.alphabet import build_alphabet, extend_alphabet
from plmdecode.data_io import split_corpus
from plmdecode.synthetic import LanguageFamily

fam = LanguageFamily(n_languages=7, n_words=40, seed=0)
src, tgt = fam.languages[:6], fam.languages[6]
A = fam.alphabet([l.name for l in src])

multi = [s for l in src for s in l.corpus(A, 150, seed=1).sequences()]
dev = [s for l in src for s in l.corpus(A, 10, seed=2).sequences()]
pre = lm.train(multi, A, lm.TrainConfig(embed_dim=16, hidden_dim=48, lr=1e-2, max_epochs=8,
                                        patience=2, batch_size=4), heldout=dev)

# new symbols are appended, so every existing id keeps its meaning
A2 = extend_alphabet(A, tgt.name, tgt.phonemes)
Am = build_alphabet({tgt.name: tgt.phonemes})
print(f"pretrained alphabet {len(A)}, extended {len(A2)}, monolingual {len(Am)}")

cfg = lm.TrainConfig(embed_dim=16, hidden_dim=48, lr=1e-2, max_epochs=30, patience=3, batch_size=4)
print("fraction  adapted  scratch")
for frac in (0.05, 0.10, 0.50):
    res = []
    for alpha, start in ((A2, pre), (Am, None)):
        pool = tgt.corpus(alpha, 400, seed=3)
        sub, _ = split_corpus(pool, frac, seed=0)
        tdev = tgt.corpus(alpha, 20, seed=4).sequences()
        test = [s for _, s in tgt.corpus(alpha, 100, seed=5).sequences()]
        if start is None:
            p = lm.train(sub.sequences(), alpha, cfg, heldout=tdev)
        else:
            p = lm.adapt(start, A, alpha, sub.sequences(), cfg, heldout=tdev)
        res.append(lm.perplexity(p, test, alpha.mask(tgt.name)))
    print(f"{frac:8.2f}  {res[0]:7.2f}  {res[1]:7.2f}")
