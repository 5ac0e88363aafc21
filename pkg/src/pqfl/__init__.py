"""pqfl: a quantum-resistant federated learning testbed.

Lattice-based key encapsulation and signatures protect gradient exchange;
aggregation is signature-gated and Byzantine-robust; differential privacy
bounds what plaintext updates reveal; and an adversary harness demonstrates
retroactive decryption of a classical toy-RSA baseline that the lattice
suite resists.
"""

from .adversary import (
    AttackSpec,
    DecryptionReport,
    OrderFindResult,
    QuantumOracle,
    RsaToyKey,
    byzantine_transform,
    factor_from_order,
    factor_modulus,
    flip_labels,
    harvest_decrypt,
    model_inversion_attack,
    rsa_key_from_primes,
    rsa_toy_cipher,
    rsa_toy_keygen,
    shor_order_find,
)
from .aggregation import (
    AggregationError,
    AggRule,
    ClipPolicy,
    GlobalUpdate,
    adaptive_clip,
    clip_threshold,
    krum,
    momentum_normalize,
    trimmed_mean,
    verified_secure_aggregate,
)
from .fl import (
    Dataset,
    GradientUpdate,
    ModelParams,
    TrainingConfig,
    apply_global_update,
    dataset_from_csv,
    dataset_to_csv,
    evaluate,
    generate_synthetic_threat_data,
    local_train_step,
    loss_gradient,
)
from .kem import (
    KemCiphertext,
    KemKeyPair,
    KemParams,
    KemPublicKey,
    SharedSecret,
    kem_decapsulate,
    kem_encapsulate,
    kem_keygen,
)
from .privacy import NoiseMechanism, PrivacyLedger, compose_budget, dp_sanitize
from .report import emit_report, read_metrics_json, render_report, write_metrics
from .ring import (
    DILITHIUM_RING,
    KYBER_RING,
    TOY_RING,
    Poly,
    PolyMat,
    PolyVec,
    RingParams,
    ntt_forward,
    ntt_inverse,
    ntt_pointwise_mul,
    poly_add,
    poly_from_bytes,
    poly_mul_negacyclic,
    poly_sub,
    poly_to_bytes,
    sample_cbd,
    sample_uniform,
)
from .scenario import (
    DataParams,
    ScenarioConfig,
    ScenarioConfigError,
    config_from_dict,
    parse_scenario_config,
)
from .sig import (
    SigKeyPair,
    SigParams,
    SigPublicKey,
    Signature,
    sig_keygen,
    sig_sign,
    sig_sign_with_attempts,
    sig_verify,
)
from .simnet import (
    Metrics,
    OverheadReport,
    RoundMetrics,
    begin_round,
    commit_round,
    measure_overhead,
    run_phase,
    run_scenario,
    run_scenario_with_ground_truth,
    setup_scenario,
)
from .transcript import (
    AGGREGATOR_ID,
    RoundTranscript,
    TranscriptFormatError,
    TranscriptMessage,
    dump_transcripts,
    load_transcripts,
)
from .wire import (
    DEFAULT_QUANT_SCALE,
    SignedCipherUpdate,
    decode_gradient,
    dequantize,
    encode_gradient,
    keystream,
    quantize,
    xor_bytes,
)

__version__ = "0.1.0"
