#pragma once

#include <map>
#include <string>
#include <vector>

#include "wsseg/image.hpp"
#include "wsseg/mat.hpp"

namespace wsseg {

// Dataset-aggregated intersection/union counts per class (micro averaging).
struct ConfusionCounts {
    std::vector<long long> intersection;
    std::vector<long long> unions;

    explicit ConfusionCounts(int num_classes)
        : intersection(num_classes, 0), unions(num_classes, 0) {}

    int num_classes() const { return static_cast<int>(intersection.size()); }
    void merge(const ConfusionCounts& other);
};

void accumulate(const GridU8& pred, const GridU8& gt, ConfusionCounts& counts);

struct IoUResult {
    std::vector<double> per_class;  // NaN when the class is excluded
    std::vector<bool> included;
    double miou = 0.0;
};

// IoU_k = I_k / U_k over aggregated counts. Classes with zero union are
// excluded from the mean unless score_absent_as_zero is set.
IoUResult miou_from_counts(const ConfusionCounts& counts, bool score_absent_as_zero = false);

struct SweepPoint {
    double lambda = 0.0;
    double miou = 0.0;
    std::vector<double> per_class;
};

struct SweepResult {
    std::vector<SweepPoint> curve;  // lambda = 0.00, 0.01, ..., 1.00
    double best_lambda = 0.0;
    double best_miou = 0.0;
};

// Evaluates finalize() at every grid threshold against the ground truths.
// Fused foreground stacks are computed once per image by the caller; only
// the background threshold varies. Ties prefer the lowest lambda.
SweepResult sweep(const std::vector<std::vector<Mat>>& m_fg_per_image,
                  const std::vector<GridU8>& gts, bool score_absent_as_zero = false);

struct VolumeEmbeddings {
    std::string volume_id;
    std::vector<std::vector<double>> ordered;  // by slice index
};

// Mean cosine similarity between each center slice and its in-window
// neighbors, truncated at volume boundaries, averaged over all centers.
// Keyed by window size.
std::map<int, double> sliding_similarity(const std::vector<VolumeEmbeddings>& volumes,
                                         const std::vector<int>& window_sizes);

struct TokenCount {
    std::string token;
    long long count = 0;
};

// Lowercased tokens split on non-alphanumeric runs, stop words dropped,
// counted per group; ordered by count desc then lexicographic.
std::map<std::string, std::vector<TokenCount>> word_frequency(
    const std::vector<std::pair<std::string, std::string>>& caption_and_group,
    const std::vector<std::string>& stopwords);

// Fixed 50-word English list (also shipped at data/stopwords.txt).
const std::vector<std::string>& default_stopwords();
std::vector<std::string> read_stopwords(const std::filesystem::path& path);

}  // namespace wsseg
