#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>
#include <xreid/xreid.h>

namespace {

int exit_code_for(xr_status st) {
    if (st == XR_OK) return 0;
    std::fprintf(stderr, "error: %s\n", xr_last_error());
    return st == XR_ERR_INVALID_ARGUMENT ? 1 : 2;
}

void print_ranking(const char* label, const xr_ranking& r) {
    std::printf("%s: rank-1 %.4f  rank-5 %.4f  rank-10 %.4f  rank-20 %.4f  mAP %.4f  (%" PRId64
                " queries, %" PRId64 " skipped)\n",
                label, r.cmc1, r.cmc5, r.cmc10, r.cmc20, r.map, r.n_queries, r.n_queries_skipped);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"camera-style imitation + dual-objective re-identification pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    std::int64_t gc_params = 50;
    double gc_eps = 1e-3;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config file")->required();
        sub->add_option("--out", out_dir, "output directory override");
        sub->add_option("--seed", seed, "seed override");
        return sub;
    };

    CLI::App* c_synth = add_common(app.add_subcommand("synth", "write the synthetic world"));
    CLI::App* c_style =
        add_common(app.add_subcommand("train-style", "train the translation engine"));
    CLI::App* c_gen =
        add_common(app.add_subcommand("generate", "materialize the imitated and pseudo sets"));
    CLI::App* c_train = add_common(app.add_subcommand("train", "train the recognition model"));
    CLI::App* c_eval = add_common(app.add_subcommand("eval", "rank the query set and report"));
    CLI::App* c_grad =
        add_common(app.add_subcommand("gradcheck", "finite-difference gradient audit"));
    c_grad->add_option("--n-params", gc_params, "parameter scalars to probe");
    c_grad->add_option("--eps", gc_eps, "central-difference step");
    CLI::App* c_oracle =
        add_common(app.add_subcommand("oracle", "rank via the independent evaluator"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    CLI::App* sub = app.get_subcommands().front();

    xr_config* cfg = nullptr;
    xr_status st = xr_config_load(config_path.c_str(), &cfg);
    if (st == XR_OK)
        st = xr_config_override(cfg, out_dir.empty() ? nullptr : out_dir.c_str(),
                                sub->count("--seed") > 0 ? 1 : 0, seed);

    if (st == XR_OK) {
        if (sub == c_synth) {
            st = xr_run_synth(cfg);
            if (st == XR_OK) std::printf("world written\n");
        } else if (sub == c_style) {
            st = xr_run_train_style(cfg);
            if (st == XR_OK) std::printf("translation engine written\n");
        } else if (sub == c_gen) {
            st = xr_run_generate(cfg);
            if (st == XR_OK) std::printf("imitated and pseudo sets written\n");
        } else if (sub == c_train) {
            st = xr_run_train(cfg);
            if (st == XR_OK) std::printf("training complete\n");
        } else if (sub == c_eval) {
            xr_ranking r;
            st = xr_run_eval(cfg, &r);
            if (st == XR_OK) print_ranking("eval", r);
        } else if (sub == c_oracle) {
            xr_ranking r;
            st = xr_run_oracle(cfg, &r);
            if (st == XR_OK) print_ranking("oracle", r);
        } else if (sub == c_grad) {
            double max_rel = 0.0;
            st = xr_run_gradcheck(cfg, gc_params, gc_eps, &max_rel);
            if (st == XR_OK) std::printf("gradcheck: max relative error %.3e\n", max_rel);
        }
    }

    xr_config_free(cfg);
    return exit_code_for(st);
}
