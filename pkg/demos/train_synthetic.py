"""
Training on a templated corpus
==============================

Fit a small network on generated sentences about people and places, watch
the loss fall, then score and print predictions on held-out sentences.
"""
from relmetric import TrainConfig, evaluate, train
from relmetric.harness import predict_examples
from relmetric.synthetic import synthetic_corpus

corpus = synthetic_corpus(60, seed=1)
train_set, dev_set = corpus[:48], corpus[48:]

# a scaled-down configuration; the defaults are sized for real corpora
config = TrainConfig(channels=8, layers=4, context_dim=32, word_dim=32, char_features=16,
                     epochs=15, dropout=0.2, seed=0)
result = train(config, train_set, dev_set)

for rec in result.log:
    print(f"epoch {rec['epoch']:2d}  lr {rec['lr']:.5f}  loss {rec['train_loss']:7.3f}  "
          f"dev RE F1 {rec['dev_re_f1']:.3f}")

# the returned model is the epoch with the best dev RE F1
model = result.model
predictions = predict_examples(model, dev_set)
report = evaluate(predictions, dev_set)
print(f"\ndev NER F1 {report.ner.f1:.3f}   RE F1 {report.re.f1:.3f}")

for pred in predictions[:4]:
    print("\n" + pred.text)
    for r in pred.relations:
        print(f"  {pred.surface(r.subject)} --{r.predicate}--> {pred.surface(r.object)}")
