"""Joint relational triple extraction over a single token/relation
interaction map: dataset handling, a from-scratch differentiable encoder,
map scoring, decoding, training and evaluation."""

from .dataset import (AnnotatedSentence, EntitySpan, GoldMap, RelationSchema,
                      Triple, anchor_triples, build_gold_map, bucket_by_count,
                      classify_overlap, load_dataset, load_relation_map, verbalize)
from .decoder import (decode_multi, decode_single, oracle_decode_multi,
                      oracle_decode_single)
from .encoder import EncoderConfig, EncoderState, ModelParams, attention, embed, encode
from .evaluation import PRF, bench, breakdown, micro_prf
from .interaction import InteractionMap, map_loss, predict_cells, score_map, to_probs
from .synthetic import SynthConfig, make_synthetic
from .tensor import Tensor, backward, zero_grads
from .tokenizer import EncodedInput, Vocab, build_vocab, encode_concat
from .trainer import (Example, TrainConfig, load_checkpoint, predict_triples,
                      prepare_examples, save_checkpoint, train)

__version__ = "0.1.0"
