#include "wsseg/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "wsseg/errors.hpp"
#include "wsseg/pseudo_label.hpp"

namespace wsseg {

void ConfusionCounts::merge(const ConfusionCounts& other) {
    if (other.num_classes() != num_classes()) throw DataError("merge: class count mismatch");
    for (int k = 0; k < num_classes(); ++k) {
        intersection[k] += other.intersection[k];
        unions[k] += other.unions[k];
    }
}

void accumulate(const GridU8& pred, const GridU8& gt, ConfusionCounts& counts) {
    if (!pred.same_shape(gt)) {
        throw DataError("accumulate: prediction/ground-truth shape mismatch");
    }
    const int k = counts.num_classes();
    for (size_t i = 0; i < pred.a.size(); ++i) {
        const int p = pred.a[i];
        const int t = gt.a[i];
        if (p >= k || t >= k) throw DataError("accumulate: label value out of class range");
        if (p == t) {
            counts.intersection[p] += 1;
            counts.unions[p] += 1;
        } else {
            counts.unions[p] += 1;
            counts.unions[t] += 1;
        }
    }
}

IoUResult miou_from_counts(const ConfusionCounts& counts, bool score_absent_as_zero) {
    IoUResult r;
    const int k = counts.num_classes();
    r.per_class.assign(k, std::numeric_limits<double>::quiet_NaN());
    r.included.assign(k, false);
    double sum = 0.0;
    int n = 0;
    for (int c = 0; c < k; ++c) {
        if (counts.unions[c] == 0) {
            if (score_absent_as_zero) {
                r.per_class[c] = 0.0;
                r.included[c] = true;
                ++n;
            }
            continue;
        }
        r.per_class[c] =
            static_cast<double>(counts.intersection[c]) / static_cast<double>(counts.unions[c]);
        r.included[c] = true;
        sum += r.per_class[c];
        ++n;
    }
    if (n == 0) throw DataError("miou: no class has any support");
    r.miou = sum / n;
    return r;
}

SweepResult sweep(const std::vector<std::vector<Mat>>& m_fg_per_image,
                  const std::vector<GridU8>& gts, bool score_absent_as_zero) {
    if (m_fg_per_image.empty()) throw DataError("sweep: empty dataset");
    if (m_fg_per_image.size() != gts.size()) throw DataError("sweep: stacks/gts mismatch");
    int num_classes = 0;
    for (const auto& stack : m_fg_per_image) {
        if (stack.empty()) throw DataError("sweep: image with no foreground channels");
        num_classes = std::max(num_classes, static_cast<int>(stack.size()) + 1);
    }

    SweepResult r;
    r.best_miou = -1.0;
    r.best_lambda = 0.0;
    for (int step = 0; step <= 100; ++step) {
        const double lambda = step * 0.01;
        ConfusionCounts counts(num_classes);
        for (size_t i = 0; i < m_fg_per_image.size(); ++i) {
            const FinalizeResult fin = finalize(m_fg_per_image[i], lambda);
            accumulate(fin.labels, gts[i], counts);
        }
        const IoUResult iou = miou_from_counts(counts, score_absent_as_zero);
        SweepPoint pt;
        pt.lambda = lambda;
        pt.miou = iou.miou;
        pt.per_class = iou.per_class;
        if (pt.miou > r.best_miou) {  // strict: ties keep the lowest lambda
            r.best_miou = pt.miou;
            r.best_lambda = lambda;
        }
        r.curve.push_back(std::move(pt));
    }
    return r;
}

std::map<int, double> sliding_similarity(const std::vector<VolumeEmbeddings>& volumes,
                                         const std::vector<int>& window_sizes) {
    for (int w : window_sizes) {
        if (w < 3 || w % 2 == 0) {
            throw DataError("sliding_similarity: window sizes must be odd and >= 3");
        }
    }
    bool any_pair = false;
    for (const auto& v : volumes) {
        if (v.ordered.size() >= 2) any_pair = true;
    }
    if (!any_pair) throw DataError("sliding_similarity: no volume has more than one slice");

    auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
        if (a.size() != b.size()) throw DataError("sliding_similarity: embedding dim mismatch");
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (size_t i = 0; i < a.size(); ++i) {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        if (na <= 0.0 || nb <= 0.0) return 0.0;
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };

    std::map<int, double> out;
    for (int w : window_sizes) {
        const int half = (w - 1) / 2;
        double total = 0.0;
        long long centers = 0;
        for (const auto& vol : volumes) {
            const int n = static_cast<int>(vol.ordered.size());
            if (n < 2) continue;
            for (int c = 0; c < n; ++c) {
                const int lo = std::max(0, c - half);
                const int hi = std::min(n - 1, c + half);
                double acc = 0.0;
                int m = 0;
                for (int j = lo; j <= hi; ++j) {
                    if (j == c) continue;
                    acc += cosine(vol.ordered[c], vol.ordered[j]);
                    ++m;
                }
                if (m > 0) {
                    total += acc / m;
                    ++centers;
                }
            }
        }
        out[w] = centers > 0 ? total / centers : 0.0;
    }
    return out;
}

std::map<std::string, std::vector<TokenCount>> word_frequency(
    const std::vector<std::pair<std::string, std::string>>& caption_and_group,
    const std::vector<std::string>& stopwords) {
    const std::set<std::string> stop(stopwords.begin(), stopwords.end());
    std::map<std::string, std::map<std::string, long long>> counts;
    for (const auto& [caption, group] : caption_and_group) {
        std::string token;
        auto flush = [&]() {
            if (!token.empty() && !stop.count(token)) counts[group][token] += 1;
            token.clear();
        };
        for (char ch : caption) {
            if (std::isalnum(static_cast<unsigned char>(ch))) {
                token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
            } else {
                flush();
            }
        }
        flush();
    }
    std::map<std::string, std::vector<TokenCount>> out;
    for (auto& [group, m] : counts) {
        std::vector<TokenCount> v;
        v.reserve(m.size());
        for (const auto& [tok, n] : m) v.push_back({tok, n});
        std::sort(v.begin(), v.end(), [](const TokenCount& a, const TokenCount& b) {
            if (a.count != b.count) return a.count > b.count;
            return a.token < b.token;
        });
        out[group] = std::move(v);
    }
    return out;
}

const std::vector<std::string>& default_stopwords() {
    static const std::vector<std::string> words = {
        "a",    "an",    "and",  "are",  "as",   "at",    "be",   "been", "but",  "by",
        "for",  "from",  "had",  "has",  "have", "he",    "her",  "his",  "i",    "in",
        "into", "is",    "it",   "its",  "of",   "on",    "or",   "our",  "she",  "so",
        "that", "the",   "their", "them", "there", "they", "this", "to",   "was",  "we",
        "were", "what",  "when", "which", "who",  "will",  "with", "you",  "your", "not"};
    return words;
}

std::vector<std::string> read_stopwords(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("stopwords: cannot open " + path.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

}  // namespace wsseg
