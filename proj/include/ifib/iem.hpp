#pragma once

// Integral estimation module: a stack of fully-connected layers with
// non-negative (softplus-reparametrized) weights and tanh activations.
// Shared by the IFIB models and the baselines; heads differ per model.

#include <random>
#include <string>

#include "ifib/autodiff.hpp"

namespace ifib::models {

struct IemConfig {
  int input_width = 0;
  int hidden_width = 32;
  int layers = 3;
};

// Registers <prefix>W1..WL (nonneg) and <prefix>b1..bL (free).
void add_iem_params(ad::ParamStore& store, const std::string& prefix, const IemConfig& cfg,
                    std::mt19937_64& rng);

// tanh trunk, monotone nondecreasing in every input coordinate.
ad::Var iem_trunk(ad::Tape& tape, const std::string& prefix, const IemConfig& cfg, ad::Var x);
ad::DVar iem_trunk(ad::Tape& tape, const std::string& prefix, const IemConfig& cfg, ad::DVar x);

}  // namespace ifib::models
