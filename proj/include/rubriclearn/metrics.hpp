#pragma once

#include <span>
#include <string>

namespace rubriclearn {

/// Arithmetic mean of content scores. Throws InvariantError on an empty set
/// or a score outside [0, 10].
double mean_content_score(std::span<const double> scores);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0; // population standard deviation
};

/// Mean and population standard deviation over repeat-level values.
MeanStd mean_and_std(std::span<const double> values);

/// "4.93"
std::string format_mean(double mean);
/// "3.40 ± 0.28"
std::string format_mean_std(const MeanStd& m);
/// "+4.95 ± 0.06"; the sign is always shown.
std::string format_signed_mean_std(const MeanStd& m);

} // namespace rubriclearn
