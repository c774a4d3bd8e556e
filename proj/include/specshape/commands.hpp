#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace specshape {

/// Everything a subcommand needs: the merged+overridden config document and
/// the standard paths/flags. Commands throw on failure; the binary maps
/// exception types to exit codes.
struct CommandArgs {
    nlohmann::json config;
    std::filesystem::path out_dir;
    std::filesystem::path data_dir;        // fit, eval
    std::filesystem::path checkpoint_path; // eval
    int jobs = 1;
    bool quiet = false;
};

/// Load a config file (or start from the command's defaults when path is
/// empty), deep-merge user values over defaults, then apply dotted-key
/// overrides ("a.b.c=value") and the --seed flag.
nlohmann::json build_config(const std::string& command,
                            const std::string& config_path,
                            const std::vector<std::string>& overrides,
                            std::optional<std::uint64_t> seed_flag);

void run_generate(const CommandArgs& args);
void run_fit(const CommandArgs& args);
void run_transfer(const CommandArgs& args);
void run_eval(const CommandArgs& args);

// Shared file helpers (exposed for tests).
void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

} // namespace specshape
