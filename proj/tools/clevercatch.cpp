// clevercatch command-line tool.
//
//   clevercatch [--config FILE] [--seed N] [--out-dir DIR] [--set section.key=value]... <command> [path options]
//
// On failure prints one line to stderr:
//   error kind=<kind> command=<command> message="<text>"
// and exits non-zero.
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clevercatch/clevercatch.hpp"

namespace cc = clevercatch;

namespace {

int exit_code(const std::string& kind) {
    static const std::map<std::string, int> codes{{"config", 2}, {"parse", 3},    {"io", 4},      {"fingerprint", 5},
                                                  {"shape", 6},  {"contract", 7}, {"numeric", 8}};
    auto it = codes.find(kind);
    return it == codes.end() ? 1 : it->second;
}

std::string one_line(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out;
}

int fail(const std::string& kind, const std::string& command, const std::string& message) {
    std::fprintf(stderr, "error kind=%s command=%s message=\"%s\"\n", kind.c_str(),
                 command.empty() ? "-" : command.c_str(), one_line(message).c_str());
    return exit_code(kind);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CleverCatch: knowledge-guided weak supervision for prescriber fraud detection"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::vector<std::string> overrides;
    std::map<std::string, std::string> paths;

    app.add_option("--config", config_path, "configuration file (INI sections per module)");
    app.add_option("--seed", seed, "root seed; overrides [run] seed");
    app.add_option("--out-dir", out_dir, "run directory; overrides [run] out_dir");
    app.add_option("--set", overrides, "override a configuration key, e.g. detector.lambda=0");

    static const std::vector<std::pair<std::string, std::string>> path_flags{
        {"claims", "claims CSV"},
        {"rules", "rules CSV"},
        {"labels", "training labels CSV (npi,label)"},
        {"eval-labels", "evaluation labels CSV (npi,label)"},
        {"features", "feature matrix CSV"},
        {"encoders", "encoder model JSON"},
        {"detector", "detector model JSON"},
        {"scores", "scores CSV (npi,score)"},
        {"targets", "drug target CSV (drug,target)"},
        {"opioids", "opioid annotation CSV (drug,likelihood[,weight])"},
    };
    struct Command {
        const char* name;
        const char* help;
        std::vector<const char*> flags;
        cc::fs::path (*run)(const cc::RunConfig&);
    };
    const std::vector<Command> commands{
        {"simulate", "generate a synthetic dataset with planted fraud", {}, cc::cmd_simulate},
        {"derive-rules", "derive cost-preference and opioid rules", {"claims", "targets", "opioids"}, cc::cmd_derive_rules},
        {"featurize", "build the rule-contrast feature matrix", {"claims", "rules"}, cc::cmd_featurize},
        {"pretrain", "pretrain rule and sample encoders", {"claims", "rules"}, cc::cmd_pretrain},
        {"pseudolabel", "pseudo-labels from optimal-transport alignment",
         {"claims", "rules", "features", "encoders"}, cc::cmd_pseudolabel},
        {"train", "train the detector with the hybrid objective",
         {"claims", "rules", "features", "encoders", "labels"}, cc::cmd_train},
        {"score", "score and rank prescribers", {"detector", "features"}, cc::cmd_score},
        {"evaluate", "metrics and PR curve against labels",
         {"scores", "detector", "features", "eval-labels"}, cc::cmd_evaluate},
        {"ablate", "retrain over rule subsets and compare", {"claims", "rules", "labels", "eval-labels"}, cc::cmd_ablate},
    };

    std::map<std::string, CLI::App*> subs;
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        sub->fallthrough();
        for (const char* flag : c.flags) {
            std::string help;
            for (const auto& [f, h] : path_flags)
                if (f == flag) help = h;
            sub->add_option(std::string("--") + flag, paths[flag], help);
        }
        subs[c.name] = sub;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", "", e.what());
    }

    std::string command;
    const Command* chosen = nullptr;
    for (const auto& c : commands)
        if (subs[c.name]->parsed()) chosen = &c, command = c.name;

    try {
        cc::RunConfig cfg = config_path.empty() ? cc::RunConfig{} : cc::load_config(config_path);
        for (const auto& o : overrides) cc::apply_override(cfg, o);
        if (seed) cfg.seed = *seed;
        if (out_dir) cfg.out_dir = *out_dir;
        for (const auto& [flag, value] : paths) {
            if (value.empty()) continue;
            std::string key = flag;
            for (char& ch : key)
                if (ch == '-') ch = '_';
            cc::set_config_value(cfg, "paths." + key, value, "--" + flag);
        }
        const cc::fs::path manifest = chosen->run(cfg);
        std::printf("%s\n", manifest.generic_string().c_str());
        return 0;
    } catch (const cc::Error& e) {
        return fail(e.kind(), command, e.what());
    } catch (const std::exception& e) {
        return fail("internal", command, e.what());
    }
}
