#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tadlab/common.hpp"
#include "tadlab/rng.hpp"

namespace tadlab::core {

// Labeled feature matrix. y = 0 marks normal rows, y = 1 anomalies; labels
// are used for evaluation only, never for fitting.
struct Dataset {
    std::string name;
    Matrix X;
    std::vector<int> y;
    std::string source_path;
    std::uint64_t source_checksum = 0;

    std::size_t n() const { return X.rows; }
    std::size_t d() const { return X.cols; }
    std::size_t n_anomalies() const;
    std::size_t n_normals() const { return n() - n_anomalies(); }

    void validate() const;  // throws ValidationError on invariant breach
};

// One-class partition: train/val hold only normal rows; test holds the
// remaining normals plus every anomaly.
struct SplitBundle {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;

    std::string to_json() const;
    static SplitBundle from_json(const std::string& text);
};

// Column-wise mean/std fitted on training rows only.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<std::size_t> constant_columns;  // std floored at kStdFloor

    static constexpr double kStdFloor = 1e-12;

    Matrix transform(const Matrix& x) const;
};

// CSV ingestion: header row required, one column literally named "label"
// with values 0/1, all other columns parsed as real features.
Dataset load_dataset(const std::string& path);

// Parse from an in-memory CSV body (same contract as load_dataset).
Dataset parse_csv(const std::string& text, const std::string& name);

std::string to_csv(const Dataset& ds);
void save_csv(const Dataset& ds, const std::string& path);

// 50% of normals to train+val (floor), 20% of that half to val (floor),
// everything else, including all anomalies, to test. Deterministic in seed.
SplitBundle one_class_split(const Dataset& ds, std::uint64_t seed);

std::pair<Standardizer, Matrix> standardize(const Matrix& fit_on, const Matrix& apply_to);
Standardizer fit_standardizer(const Matrix& fit_on);

}  // namespace tadlab::core
