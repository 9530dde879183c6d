#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "credlens/common/error.hpp"
#include "credlens/llm/prompt.hpp"

namespace credlens::catalog {

class CatalogError : public Error {
public:
    using Error::Error;
};

/// One measurable feature: which parts of the post the model sees, the
/// prompts that measure it, and how their scores combine.
struct FeatureSpec {
    std::string id;
    std::string name;
    llm::Level level = llm::Level::Post;
    std::vector<std::string> prompts;
    int scaleMin = 1;
    int scaleMax = 7;
    std::string aggregation = "mean";
    double reliabilityThreshold = 0.7;

    /// Multi-prompt features are subject to the reliability gate.
    bool subjective() const { return prompts.size() >= 2; }
    void validate() const;
};

struct FeatureCatalog {
    std::string version;
    std::vector<FeatureSpec> features;

    const FeatureSpec& at(std::string_view id) const;
};

FeatureCatalog catalogFromJson(const nlohmann::json& doc);
nlohmann::json catalogToJson(const FeatureCatalog& catalog);
FeatureCatalog loadCatalog(const std::filesystem::path& path);
void saveCatalog(const FeatureCatalog& catalog, const std::filesystem::path& path);

/// Reconstructed default catalog of twelve features across the caption,
/// image and post levels.
FeatureCatalog defaultCatalog();

/// Lower-case identifier made of [a-z0-9_].
std::string slugify(std::string_view label);

}  // namespace credlens::catalog
