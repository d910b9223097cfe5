"""Train the toy acoustic model, extract an emotion vector, dial intensity.

A scaled-down version of the full pipeline on a small corpus: pre-train on
neutral data from all seen speakers, fine-tune on angry data, extract the
parameter difference, then sweep the scaling factor and watch the
projected intensity score rise monotonically for a speaker whose emotional
data never entered fine-tuning.
"""

import numpy as np

from emovec import (
    CorpusConfig,
    EmbedderHyper,
    IntensityEstimator,
    ModelConfig,
    TrainHyper,
    apply_vector,
    build_corpus,
    extract_vector,
    init_params,
    secs,
    speaker_vector_table,
    synthesize,
    train,
    train_embedder,
)
from emovec.embedder import embed_utterance
from emovec.pipeline import emotional_split, neutral_seen_split

corpus = build_corpus(
    CorpusConfig(neutral_only_speakers=4, emotional_speakers=3, unseen_speakers=1,
                 utterances_per_speaker=80),
    seed=11,
)

print("training speaker embedder ...")
embedder = train_embedder(corpus, seed=5, hyper=EmbedderHyper(steps=300))
print("  holdout accuracy:", embedder.meta["holdout_accuracy"])
table = speaker_vector_table(embedder, corpus)
vecs = {s: e.embedding for s, e in table.items()}

print("pre-training on neutral data ...")
config = ModelConfig()
pre = train(
    init_params(config, 7),
    neutral_seen_split(corpus, "train"),
    vecs,
    TrainHyper(steps=800, seed=21),
    role="pretrained",
    val_split=neutral_seen_split(corpus, "val"),
    meta_extra={"scope": "multi"},
)
print("  val loss:", pre.meta["final_val_loss"])

print("fine-tuning on angry data (all emotional speakers) ...")
ft = train(
    pre,
    emotional_split(corpus, "train", "angry"),
    vecs,
    TrainHyper(steps=300, learning_rate=0.002, seed=22),
    role="finetuned",
    meta_extra={"scope": "multi", "emotion": "angry"},
)
tau = extract_vector(ft, pre, "angry")
print("  vector scope:", tau.scope)

# Evaluate on a speaker with no emotional training data at all.
target = corpus.neutral_only_seen_ids[0]
sentences = corpus.test_sentences(6)
estimator = IntensityEstimator.from_corpus(corpus)
neutral = synthesize(pre, sentences, table[target].embedding)

print(f"\nintensity sweep for target {target} (no angry data in training):")
for alpha in (0.0, 0.1, 0.3, 0.5, 0.7, 0.9):
    merged = apply_vector(pre, tau, alpha)
    batch = synthesize(merged, sentences, table[target].embedding)
    score = np.mean(
        [estimator.score(b.frames, n.frames, "angry") for b, n in zip(batch, neutral)]
    )
    own = np.mean(
        [
            secs(embed_utterance(embedder, b.frames), embed_utterance(embedder, n.frames))
            for b, n in zip(batch, neutral)
        ]
    )
    print(f"  alpha={alpha:.1f}: intensity score {score:+.4f}  SECS vs own neutral {own:.4f}")
