#pragma once

#include <string>

#include "inflow/transform.hpp"

namespace inflow {

/**
 * Reversible instance normalization: standardize each lookback window per
 * variate with its own mean and variance, optionally apply a learnable
 * affine map, and restore those statistics on the forecast.
 */
class RevInTransform final : public Transform {
public:
    RevInTransform(std::size_t variates, bool affine = true, double eps = 1e-5);

    ad::Var forward(ad::Tape& tape, ad::Var x) override;
    ad::Var inverse(ad::Tape& tape, ad::Var y) override;
    std::vector<Parameter*> parameters() override;
    std::string kind() const override { return "revin"; }

    bool affine() const { return affine_; }
    const StatsCache& cache() const { return cache_; }

    Parameter log_scale;
    Parameter shift;

private:
    bool affine_;
    double eps_;
    StatsCache cache_;
};

}  // namespace inflow
