#pragma once

#include <memory>
#include <string>

#include "config.hpp"
#include "eval.hpp"
#include "gan.hpp"
#include "train.hpp"

namespace xreid {

// Command bodies behind the CLI. Each resolves the config it receives, is
// idempotent for a fixed resolved config, and names the missing predecessor
// command when an upstream artifact is absent.

// world image files + world.manifest under world_dir
void cmd_synth(ExperimentConfig cfg);

// translation engine checkpoint `style_engine` (+ .meta) under out_dir
void cmd_train_style(ExperimentConfig cfg);

// materialized ST/TT image trees and st.manifest/tt.manifest under out_dir;
// refuses to write when the dataset identities break the count contracts
void cmd_generate(ExperimentConfig cfg);

TrainResult cmd_train(ExperimentConfig cfg);

// report.json (ranking path) under out_dir
RankingResult cmd_eval(ExperimentConfig cfg);

// report_oracle.json via the independent enumeration evaluator
RankingResult cmd_oracle(ExperimentConfig cfg);

// max relative error, also recorded in gradcheck.txt
double cmd_gradcheck(ExperimentConfig cfg, long n_params = 50, double eps = 1e-3);

// parametric styles for synthetic worlds, or the trained translation engine
std::unique_ptr<StyleEngine> make_engine(const ExperimentConfig& cfg);

}  // namespace xreid
