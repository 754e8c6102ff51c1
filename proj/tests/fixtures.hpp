#pragma once

// Small trained models shared by the attack and ensemble tests.

#include "dna/ensemble.hpp"
#include "dna/fft.hpp"
#include "dna/signal_io.hpp"

namespace dna::testkit {

struct ToyProblem {
    ArchConfig arch;
    TrainConfig train;
    TrainingData train_data;
    Tensor test_x;
    std::vector<int> test_y;
    std::vector<std::string> test_ids;
    RingFilterBank bank;
};

inline ToyProblem make_toy_problem(std::size_t records_per_class = 60, std::size_t length = 256) {
    ToyProblem p;
    SynthConfig synth;
    synth.records_per_class = records_per_class;
    synth.length = length;
    const Dataset raw = synthesize(synth, 17);
    const auto split = split_indices(raw, 0.8, 3);
    const Dataset train_raw = subset(raw, split.train);
    const NormStats stats = fit_normalization(train_raw, length);
    const Dataset train = preprocess(train_raw, length, stats);
    const Dataset test = preprocess(subset(raw, split.test), length, stats);
    p.train_data.inputs = signals_tensor(train);
    p.train_data.labels = labels_of(train);
    for (const auto& r : train.records) p.train_data.ids.push_back(r.id);
    p.test_x = signals_tensor(test);
    p.test_y = labels_of(test);
    for (const auto& r : test.records) p.test_ids.push_back(r.id);

    p.arch.conv_blocks = {{8, 7, 2}, {16, 5, 2}};
    p.arch.feature_dim = 16;
    p.arch.input_length = length;
    p.train.epochs = 15;
    p.train.batch_size = 40;
    p.train.decor.r = 8;
    p.bank = design_bank(fft::next_pow2(length), 0.2, 0.05);
    return p;
}

// Base arm (CE only) of the toy problem, trained once per process.
inline const ClassifierParams& toy_base_model() {
    static const ClassifierParams params = [] {
        const ToyProblem p = make_toy_problem();
        return train_arm(0, EnsembleKind::Cor, p.train_data, p.arch, p.train, {}, p.bank).params;
    }();
    return params;
}

}  // namespace dna::testkit
