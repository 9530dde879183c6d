#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "credlens/corpus.hpp"
#include "credlens/llm/gateway.hpp"

namespace credlens::zeroshot {

/// Reply text from which three ratings could not be recovered.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A recovered rating lies outside the 1-7 scale.
class OutOfRangeError : public ParseError {
public:
    using ParseError::ParseError;
};

/// Default rating prompt; `{{caption}}` and `{{instructions}}` are filled at
/// render time. Shipped as assets/prompts/zero_shot.txt as well.
extern const std::string_view kDefaultTemplate;
/// Reply-format instructions substituted for `{{instructions}}`.
extern const std::string_view kReplyInstructions;

struct ParsedRating {
    corpus::RatingTriple triple;
    std::string reasoning;
};

/// Accepts a JSON object (bare, fenced, or embedded in prose) with integer
/// fields credible/believable/accurate and a reasoning string. Falls back to
/// the first standalone integer after each keyword, in keyword order.
ParsedRating parseRatingPayload(std::string_view text);

/// Structured reply in the format the prompt requests.
std::string renderRatingReply(const corpus::RatingTriple& triple, std::string_view reasoning);

double combineTriple(const corpus::RatingTriple& triple);

struct ZeroShotResult {
    std::string postId;
    corpus::RatingTriple triple;
    double combined = 0.0;
    std::string reasoning;
    std::string exchangeKey;
};

struct MissingRating {
    std::string postId;
    std::string reason;
    int attempts = 0;
};

struct RatingOutcome {
    std::optional<ZeroShotResult> result;
    std::optional<MissingRating> missing;
};

/// Follow-up turn asking the model to restate its prior reply in the
/// required format.
llm::MessageList repairMessages(const llm::MessageList& original, std::string_view priorReply,
                                std::string_view problem, std::string_view formatReminder);

/// Rates one post at post level. Unparseable replies trigger up to
/// params.maxRetries repair turns; when those run out the post is reported
/// missing. Transport failures propagate.
RatingOutcome rateZeroShot(const corpus::Post& post, const llm::ModelParams& params, llm::Gateway& gateway,
                           std::string_view templateText = kDefaultTemplate);

struct ZeroShotRun {
    std::vector<ZeroShotResult> results;
    std::vector<MissingRating> missing;
};

/// Rates every post (concurrently, `threads` workers); both lists come back
/// sorted by post id.
ZeroShotRun rateCorpus(const corpus::PostCollection& posts, const llm::ModelParams& params, llm::Gateway& gateway,
                       std::string_view templateText = kDefaultTemplate, std::size_t threads = 4);

/// JSON lines `{post_id, credible, believable, accurate, combined, reasoning, exchange_key}`.
std::string serializeResults(const std::vector<ZeroShotResult>& results);
std::vector<ZeroShotResult> parseResults(std::string_view text);
std::string serializeMissing(const std::vector<MissingRating>& missing);

}  // namespace credlens::zeroshot
