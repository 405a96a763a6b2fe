#include "ifib/iem.hpp"

#include <cmath>

#include "ifib/encoder.hpp"

namespace ifib::models {

void add_iem_params(ad::ParamStore& store, const std::string& prefix, const IemConfig& cfg,
                    std::mt19937_64& rng) {
  int in = cfg.input_width;
  for (int l = 1; l <= cfg.layers; ++l) {
    int out = cfg.hidden_width;
    store.add(prefix + "W" + std::to_string(l), nonneg_raw_init(rng, in, out, 1.0 / in),
              ad::Constraint::NonnegReparam);
    store.add(prefix + "b" + std::to_string(l),
              uniform_init(rng, 1, out, 1.0 / std::sqrt(static_cast<double>(in))));
    in = out;
  }
}

ad::Var iem_trunk(ad::Tape& tape, const std::string& prefix, const IemConfig& cfg, ad::Var x) {
  ad::Var z = x;
  for (int l = 1; l <= cfg.layers; ++l) {
    z = tape.tanh(tape.add_row(tape.matmul(z, tape.param(prefix + "W" + std::to_string(l))),
                               tape.param(prefix + "b" + std::to_string(l))));
  }
  return z;
}

ad::DVar iem_trunk(ad::Tape& tape, const std::string& prefix, const IemConfig& cfg, ad::DVar x) {
  ad::DVar z = x;
  for (int l = 1; l <= cfg.layers; ++l) {
    z = ad::dtanh(ad::dadd_row(ad::dmatmul(z, tape.param(prefix + "W" + std::to_string(l))),
                               tape.param(prefix + "b" + std::to_string(l))));
  }
  return z;
}

}  // namespace ifib::models
