#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace awda {

// Central-finite-difference validation of every tape primitive plus the
// composed objectives (MLP BCE, contrastive, full alignment objective,
// detection loss) and the gradient-reversal sign law.
struct GradCheckReport {
    struct Entry {
        std::string name;
        double max_err = 0;
        double tolerance = 0;
        int instances = 0;
        bool pass = false;
    };
    std::vector<Entry> entries;
    bool all_pass = true;
};

GradCheckReport run_gradcheck_suite(std::uint64_t seed, int instances_per_check = 50);

void print_gradcheck_report(std::ostream& os, const GradCheckReport& report);

}  // namespace awda
