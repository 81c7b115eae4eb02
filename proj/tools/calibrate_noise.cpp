// Finds the benign logit-noise level whose honest replay exact-match rate hits
// a target, for freezing as kDefaultSigmaBenign.
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "difr/noise.hpp"
#include "difr/provider_sim.hpp"
#include "difr/verifier_eval.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Calibrate the benign noise level of the noisy regime"};
  double target = 0.98;
  std::size_t prompts = 160;
  std::size_t tokens = 256;
  std::uint64_t seed = 7;
  double sigma_activation = difr::kDefaultSigmaActivation;
  int iterations = 20;
  app.add_option("--target", target, "honest exact-match rate to hit");
  app.add_option("--prompts", prompts, "number of prompts");
  app.add_option("--tokens", tokens, "tokens per prompt");
  app.add_option("--seed", seed, "run seed");
  app.add_option("--sigma-activation", sigma_activation, "activation jitter kept fixed");
  app.add_option("--iterations", iterations, "bisection steps");
  CLI11_PARSE(app, argc, argv);

  try {
    difr::ProviderConfig ref;
    ref.spec.top_k = 50;
    ref.spec.top_p = 0.95;
    ref.spec.seed = 42;
    ref.noise_seed = difr::noise::derive_seed(seed, 2);
    const auto p = difr::make_prompts(difr::noise::derive_seed(seed, 1), prompts, 16, ref.toy.vocab);
    const auto cal = difr::calibrate_benign_sigma(ref, p, tokens, target, sigma_activation, 1e-3,
                                                  1.0, iterations);
    std::printf("sigma_benign %.6g exact_match %.6f (target %.4f, %zu tokens)\n", cal.sigma_benign,
                cal.exact_match, target, prompts * tokens);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
