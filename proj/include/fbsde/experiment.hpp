#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fbsde/config.hpp"

namespace fbsde {

enum ExitStatus : int
{
    exit_ok = 0,
    exit_divergence = 1,
    exit_invalid_input = 2
};

/*!
 * Run one experiment and write its artifacts into config.out.
 *
 * Prints a one-line summary to `summary` and diagnostics to `log`. Returns
 * exit_ok, exit_divergence (iteration cap reached, blow-up, oracle without
 * fixed point) or exit_invalid_input (bad configuration, unusable output
 * path).
 */
int run_experiment(ExperimentConfig const& config, std::ostream& summary, std::ostream& log);

/// CSV writer: header row, records, then a "# key: value" block echoing the config.
class CsvWriter
{
  public:
    CsvWriter(std::filesystem::path file, std::vector<std::string> header);
    void row(std::vector<std::string> const& values);
    void finish(ExperimentConfig const& config);

  private:
    std::filesystem::path file_;
    std::string text_;
};

/// Full-precision (17 significant digits) text for a double.
std::string format_double(double v);

}  // namespace fbsde
