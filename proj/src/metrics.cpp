#include "rubriclearn/metrics.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/text.hpp"

#include <cmath>

namespace rubriclearn {

double mean_content_score(std::span<const double> scores) {
    if (scores.empty()) throw InvariantError("mean_content_score", "mean over an empty set is undefined");
    double sum = 0.0;
    for (double s : scores) {
        if (!(s >= 0.0 && s <= 10.0)) {
            throw InvariantError("mean_content_score", "score " + text::fixed(s, 3) + " outside [0, 10]");
        }
        sum += s;
    }
    return sum / static_cast<double>(scores.size());
}

MeanStd mean_and_std(std::span<const double> values) {
    if (values.empty()) throw InvariantError("mean_and_std", "no values");
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

std::string format_mean(double mean) { return text::fixed(mean, 2); }

std::string format_mean_std(const MeanStd& m) {
    return text::fixed(m.mean, 2) + " \xC2\xB1 " + text::fixed(m.std, 2);
}

std::string format_signed_mean_std(const MeanStd& m) {
    std::string mean = text::fixed(m.mean, 2);
    if (mean.front() != '-') mean.insert(mean.begin(), '+');
    return mean + " \xC2\xB1 " + text::fixed(m.std, 2);
}

} // namespace rubriclearn
