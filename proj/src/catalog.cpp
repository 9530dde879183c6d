#include "credlens/catalog.hpp"

#include <cctype>
#include <set>

#include "credlens/common/io.hpp"

namespace credlens::catalog {

using nlohmann::json;

void FeatureSpec::validate() const {
    const std::string where = "feature '" + id + "': ";
    if (id.empty() || slugify(id) != id) throw CatalogError(where + "id must be non-empty [a-z0-9_]");
    if (prompts.empty()) throw CatalogError(where + "needs at least one prompt");
    for (const auto& prompt : prompts) {
        if (trim(prompt).empty()) throw CatalogError(where + "empty prompt");
        for (const auto& name : llm::templatePlaceholders(prompt)) {
            if (name != "caption" && name != "instructions") {
                throw CatalogError(where + "unknown placeholder '{{" + name + "}}'");
            }
        }
    }
    if (scaleMin >= scaleMax) throw CatalogError(where + "scale minimum must be below maximum");
    if (aggregation != "mean") throw CatalogError(where + "unsupported aggregation '" + aggregation + "'");
    if (!(reliabilityThreshold <= 1.0)) throw CatalogError(where + "reliability threshold must be <= 1");
}

const FeatureSpec& FeatureCatalog::at(std::string_view id) const {
    for (const auto& f : features) {
        if (f.id == id) return f;
    }
    throw CatalogError("unknown feature '" + std::string(id) + "'");
}

FeatureCatalog catalogFromJson(const json& doc) {
    FeatureCatalog out;
    try {
        for (const auto& [key, value] : doc.items()) {
            if (key != "version" && key != "features") throw CatalogError("catalog: unknown key '" + key + "'");
        }
        out.version = doc.value("version", std::string("unversioned"));
        std::set<std::string> ids;
        for (const auto& item : doc.at("features")) {
            static const std::set<std::string> kKeys = {"id",    "name",        "level",
                                                        "prompts", "scale",     "aggregation",
                                                        "reliability_threshold"};
            for (const auto& [key, value] : item.items()) {
                if (!kKeys.count(key)) throw CatalogError("catalog: unknown feature key '" + key + "'");
            }
            FeatureSpec spec;
            spec.id = item.at("id").get<std::string>();
            spec.name = item.value("name", spec.id);
            const std::string level = item.at("level").get<std::string>();
            const auto parsed = llm::parseLevel(level);
            if (!parsed) throw CatalogError("feature '" + spec.id + "': unknown level '" + level + "'");
            spec.level = *parsed;
            spec.prompts = item.at("prompts").get<std::vector<std::string>>();
            if (item.contains("scale")) {
                spec.scaleMin = item["scale"].at("min").get<int>();
                spec.scaleMax = item["scale"].at("max").get<int>();
            }
            spec.aggregation = item.value("aggregation", std::string("mean"));
            spec.reliabilityThreshold = item.value("reliability_threshold", 0.7);
            spec.validate();
            if (!ids.insert(spec.id).second) throw CatalogError("catalog: duplicate feature id '" + spec.id + "'");
            out.features.push_back(std::move(spec));
        }
    } catch (const json::exception& e) {
        throw CatalogError(std::string("catalog: ") + e.what());
    }
    if (out.features.empty()) throw CatalogError("catalog has no features");
    return out;
}

json catalogToJson(const FeatureCatalog& catalog) {
    json features = json::array();
    for (const auto& f : catalog.features) {
        features.push_back({{"id", f.id},
                            {"name", f.name},
                            {"level", std::string(llm::levelName(f.level))},
                            {"prompts", f.prompts},
                            {"scale", {{"min", f.scaleMin}, {"max", f.scaleMax}}},
                            {"aggregation", f.aggregation},
                            {"reliability_threshold", f.reliabilityThreshold}});
    }
    return json{{"version", catalog.version}, {"features", std::move(features)}};
}

FeatureCatalog loadCatalog(const std::filesystem::path& path) {
    try {
        return catalogFromJson(json::parse(readTextFile(path)));
    } catch (const json::parse_error& e) {
        throw CatalogError("catalog " + path.string() + ": " + e.what());
    }
}

void saveCatalog(const FeatureCatalog& catalog, const std::filesystem::path& path) {
    writeFileAtomic(path, catalogToJson(catalog).dump(2) + "\n");
}

namespace {

FeatureSpec feature(std::string id, std::string name, llm::Level level, std::vector<std::string> questions) {
    FeatureSpec spec;
    spec.id = std::move(id);
    spec.name = std::move(name);
    spec.level = level;
    for (auto& q : questions) spec.prompts.push_back(std::move(q) + "\n\n{{instructions}}");
    return spec;
}

}  // namespace

FeatureCatalog defaultCatalog() {
    using llm::Level;
    FeatureCatalog c;
    c.version = "credlens-default-catalog-v1";
    c.features = {
        feature("formality", "Language formality", Level::Caption,
                {"How formal is the language used in this caption?",
                 "How professional is the tone of this caption?"}),
        feature("readability", "Caption readability", Level::Caption,
                {"How easy is this caption to read?", "How clearly written is this caption?"}),
        feature("hashtag_use", "Excessive hashtag use", Level::Caption,
                {"How heavily and excessively does this caption rely on hashtags?"}),
        feature("aesthetic_quality", "Aesthetic quality", Level::Image,
                {"Rate the visual appeal of this image.", "How eye-catching is this image?",
                 "How polished and professionally produced does this image look?"}),
        feature("meme_likelihood", "Meme format", Level::Image, {"How likely is it that this image is a meme?"}),
        feature("image_manipulation", "Image manipulation", Level::Image,
                {"How likely is it that this image has been digitally manipulated or edited to mislead?"}),
        feature("information_concreteness", "Information concreteness", Level::Post,
                {"How much detail does this post give?", "How tangible are the claims this post makes?",
                 "How precise are the facts in this post (names, numbers, dates, places)?"}),
        feature("sensationalism", "Sensationalism", Level::Post,
                {"How sensational is this post?",
                 "To what extent does this post use emotionally charged or exaggerated content?"}),
        feature("objectivity", "Objectivity", Level::Post,
                {"How objective is this post?", "How balanced and free of bias is this post?"}),
        feature("verifiability", "Verifiability", Level::Post,
                {"How easy would it be to verify the information in this post?",
                 "To what extent does this post provide enough context or background to check its claims?"}),
        feature("image_caption_alignment", "Image-caption alignment", Level::Post,
                {"How well does the image match the caption of this post?"}),
        feature("false_information", "False information", Level::Post,
                {"How likely is it that this post contains false information?"}),
    };
    return c;
}

std::string slugify(std::string_view label) {
    std::string out;
    bool pendingSep = false;
    for (char raw : label) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isalnum(c)) {
            if (pendingSep && !out.empty()) out.push_back('_');
            out.push_back(static_cast<char>(std::tolower(c)));
            pendingSep = false;
        } else {
            pendingSep = true;
        }
    }
    return out;
}

}  // namespace credlens::catalog
