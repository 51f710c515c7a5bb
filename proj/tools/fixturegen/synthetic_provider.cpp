#include "synthetic_provider.hpp"

#include <hitl/digest.hpp>

#include <nlohmann/json.hpp>

#include <random>

namespace hitl::fixturegen {

using nlohmann::json;

namespace {

struct ElementText {
  const char *definition;
  const char *rubric;
  const char *evidence;
  std::vector<const char *> quotes;
};

// Quotes are verbatim from data/fixtures/letter.txt.
const std::map<std::string, ElementText> kElements = {
    {"legal_limits",
     {"The ruler is bound by law and may not govern by will alone.",
      "Commands that subordinate the ruler to a prior law", "Explicit limits on the ruler's discretion",
      {"hold to the law that was given before you, and do not put your own wishes above it"}}},
    {"sovereignty",
     {"Ultimate authority lies outside the office holder.",
      "Authority located above the governor", "Statements naming a higher source of authority",
      {"Remember that there is authority above you, and above that authority stands the law by "
       "which both of you are judged."}}},
    {"entrenchment",
     {"Core norms resist change by ordinary decision.",
      "Obligations described as binding beyond the ruler's choice", "Covenant or oath language",
      {"Keep every covenant you make, even with an enemy, and make yourself a shield for what you "
       "have granted."}}},
    {"writtenness",
     {"Norms are fixed in writing or settled custom.", "Reference to written law or long custom",
      "Mentions of written sources or practised custom",
      {"Govern by the written law and by the sound customs the people have long practised."}}},
    {"allocation",
     {"Functions are divided and officials checked.", "Distinct classes of office and oversight",
      "Appointment and supervision rules",
      {"Appoint your officials by testing them, not out of favour or partiality, and send honest "
       "observers to watch over their conduct.",
       "The people are of many classes: soldiers, judges, scribes, collectors of revenue, "
       "merchants, craftsmen and the poor."}}},
    {"supremacy",
     {"Higher norms override ordinary commands.", "Rejection of rule by command alone",
      "Statements ranking law above command",
      {"Never tell the people that you rule because you command and they obey."}}},
    {"rights",
     {"Protections individuals hold against power.", "Claims the weak can press against the strong",
      "Protections of life, property or access",
      {"A community in which the weak cannot take their right from the strong without stammering "
       "will never be secure.",
       "Beware of shedding blood without right."}}},
    {"procedural",
     {"Power must be exercised through set procedures.", "Prescribed hearings or consultation",
      "Rules on how decisions are taken",
      {"Set aside a time for those who have needs, sit with them in an open assembly"}}},
    {"jurisdictional",
     {"Some matters lie beyond an official's reach.", "Areas the ruler may not appropriate",
      "Prohibitions tied to subject matter",
      {"Do not take for yourself what the people hold in common"}}},
    {"amendment",
     {"Rules for changing the fundamental norms.", "A stated procedure for change",
      "Any rule about altering core norms",
      {"Do not overturn a good custom that has held the community together"}}},
    {"interpretation",
     {"Some body interprets and enforces the limits.", "Judges or reviewers with defined roles",
      "Appointment and review of adjudicators",
      {"Choose as judges the best of your people", "Review their judgements often"}}},
    {"conventions",
     {"Unwritten practices bind officials.", "Appeals to precedent and practice",
      "References to predecessors' good practice",
      {"Recall the just governments that preceded you and the good practices they left, and act "
       "upon them."}}},
    {"due_process",
     {"Individuals are treated fairly before sanction.", "Restraint and patience in judgement",
      "Rules on hearing and punishment",
      {"Do not be hasty in punishment when another way is open to you"}}},
    {"consent",
     {"Lawmaking rests on the agreement of the governed.", "Reference to popular approval",
      "Statements tying policy to the people's approval",
      {"the anger of the many outweighs the approval of the few"}}},
    {"stability",
     {"The order aims to endure over time.", "Continuity with past practice",
      "Warnings against disruptive innovation",
      {"do not invent a practice that damages what came before"}}},
    {"abstract_commitments",
     {"General principles allow adaptation.", "Broad moral commitments",
      "Statements of general principle",
      {"Let the matters dearest to you be those most just, most moderate and most pleasing to the "
       "common people"}}},
    {"remedies",
     {"Breaches of the limits have consequences.", "Sanctions for abuse of office",
      "Penalties tied to specific wrongs",
      {"If an official stretches his hand towards treachery ... punish him, and make his betrayal "
       "known.",
       "Whoever hoards after your prohibition, punish him without excess."}}},
};

std::string body_for(const std::string &text) {
  json body{{"id", "synthetic-" + sha256_hex(text).substr(0, 12)},
            {"object", "chat.completion"},
            {"choices", json::array({{{"index", 0},
                                      {"message", {{"role", "assistant"}, {"content", text}}},
                                      {"finish_reason", "stop"}}})},
            {"usage",
             {{"prompt_tokens", 0},
              {"completion_tokens", static_cast<int>(text.size() / 4)},
              {"total_tokens", static_cast<int>(text.size() / 4)}}}};
  return body.dump();
}

bool has(const std::string &s, std::string_view needle) {
  return s.find(needle) != std::string::npos;
}

} // namespace

SyntheticProvider::SyntheticProvider(ScoreTable scores) : scores_(std::move(scores)) {}

HttpResponse SyntheticProvider::operator()(const HttpRequest &request) {
  auto doc = json::parse(request.body);
  auto prompt = doc.at("messages").back().at("content").get<std::string>();
  return HttpResponse{200, body_for(respond(prompt)), HttpResponse::Failure::none};
}

std::string SyntheticProvider::respond(const std::string &prompt) {
  int call = 0;
  {
    std::lock_guard lock(mutex_);
    call = ++calls_[prompt];
  }
  if (has(prompt, "advocates bicameralism"))
    return grid_response(prompt, call);
  if (has(prompt, "<SEP>"))
    return schema_response();
  if (has(prompt, "Assess only element number")) {
    auto pos = prompt.find("Assess only element number ") + 27;
    auto index = static_cast<std::size_t>(std::stoi(prompt.substr(pos)));
    return element_response(index - 1, false);
  }
  if (has(prompt, "Work through every element")) {
    std::string out;
    for (std::size_t i = 0; i < scores_.keys.size(); ++i)
      out += "[" + std::to_string(i + 1) + "] " + scores_.labels.at(scores_.keys[i]) + "\n" +
             element_response(i, true) + "\n";
    return out;
  }
  if (has(prompt, "consolidated report")) {
    std::string out = "Final report: constitutional elements in the letter\n\n";
    for (std::size_t i = 0; i < scores_.keys.size(); ++i) {
      const auto &k = scores_.keys[i];
      out += std::to_string(i + 1) + ") " + scores_.labels.at(k) + ": score " +
             std::to_string(scores_.b.at(k)) + ". Evidence: \"" + kElements.at(k).quotes.front() +
             "\"\n";
    }
    out += "\nSummary table\n";
    for (const auto &k : scores_.keys)
      out += scores_.labels.at(k) + " | " + std::to_string(scores_.b.at(k)) + "\n";
    return out;
  }
  if (has(prompt, "identify the elements of constitutionalism")) {
    std::string out;
    int n = 0;
    for (const auto &k : {"legal_limits", "supremacy", "rights", "interpretation", "remedies"}) {
      const auto &e = kElements.at(k);
      out += std::to_string(++n) + ". Name: " + scores_.labels.at(k) + "\n   Definition: " +
             e.definition + "\n   Evidence: \"" + e.quotes.front() + "\"\n   Rationale: " +
             e.rubric + ".\n   Confidence: 0.9\n";
    }
    return out;
  }
  if (has(prompt, "You are coding a published research paper"))
    return coding_response(prompt, call);
  return "I cannot tell what this request wants.";
}

std::string SyntheticProvider::grid_response(const std::string &prompt, int call) {
  bool abstain = has(prompt, "There is no evidence for that!");
  int lo = has(prompt, "between 1 and") ? 1 : 0;
  int count = 0;
  if (abstain) {
    // one stray run in the 1-10 cell
    count = (lo == 1 && call == 37) ? 8 : 0;
  } else {
    std::mt19937 rng(static_cast<unsigned>(1000 * lo + call));
    count = lo == 0 ? std::uniform_int_distribution<int>(3, 8)(rng)
                    : std::uniform_int_distribution<int>(6, 9)(rng);
  }
  if (count == 0)
    return "There is no evidence for that!";
  std::string out = "Here is the evidence I found:\n";
  for (int i = 1; i <= count; ++i)
    out += "<evidence>Passage " + std::to_string(i) +
           " can be read as addressing a council of notables.</evidence>\n";
  return out;
}

std::string SyntheticProvider::schema_response() const {
  json dims = json::array();
  for (const auto &k : scores_.keys) {
    const auto &e = kElements.at(k);
    dims.push_back({{"element_key", k},
                    {"element_label", scores_.labels.at(k)},
                    {"short_definition", e.definition},
                    {"identification_rubric", json::array({e.rubric})},
                    {"evidence_expectations", json::array({e.evidence})}});
  }
  return "Here is the element list.\n\n```json\n" + json{{"dimensions", dims}}.dump(2) +
         "\n```\n";
}

std::string SyntheticProvider::element_response(std::size_t index, bool two_stage) const {
  const auto &k = scores_.keys.at(index);
  int score = two_stage ? scores_.a.at(k) : scores_.b.at(k);
  const auto &e = kElements.at(k);
  std::string out = "<explanation>";
  out += score == 0 ? "Absent. The letter has no rule for changing its own norms."
                    : (score >= 7 ? "Present. " : "Partly present. ") + std::string(e.definition);
  out += "</explanation>\n<quotations>";
  if (score > 0)
    for (std::size_t i = 0; i < e.quotes.size(); ++i)
      out += " <quote" + std::to_string(i + 1) + ">\"" + e.quotes[i] + "\"</quote" +
             std::to_string(i + 1) + ">";
  out += " </quotations>\n<score>" + std::to_string(score) + "</score>\n";
  return out;
}

std::string SyntheticProvider::coding_response(const std::string &prompt, int call) const {
  auto r = [](const char *text, std::initializer_list<const char *> quotes) {
    json q = json::array();
    for (const auto *s : quotes)
      q.push_back(s);
    return json{{"text", text}, {"quotes", q}};
  };
  json a = json::object();
  if (has(prompt, "Sentence embeddings for party manifestos")) {
    a["Q00"] = {{"value", "NO"},
                {"rationale", r("Only an encoder classifier is used.",
                                {"No generative model was used at any stage."})}};
    a["Q01"] = {{"value", "Unknown"}};
    a["Q02"] = {{"value", "SOCIAL"}};
    return json{{"answers", a}}.dump(2);
  }
  bool agentic = has(prompt, "An agentic pipeline for archival synthesis");
  if (agentic) {
    a["Q00"] = {{"value", "YES"},
                {"rationale", r("A reasoning model drives the agent.",
                                {"An autonomous agent built on a reasoning model"})}};
    a["Q10"] = {{"value", "5"},
                {"rationale", r("It builds a typology.", {"proposed a typology of administrative conflict"})}};
    a["Q13"] = {{"value", "4"}, {"rationale", r("Synthesis across letters.", {"read the full corpus of letters"})}};
    a["Q14"] = {{"value", "3"}, {"rationale", r("Categories emerge.", {"proposed a typology"})}};
    a["Q15"] = {{"value", "5"}, {"rationale", r("Whole corpus.", {"read the full corpus of letters"})}};
    a["Q16"] = {{"value", "0"}, {"rationale", r("The agent plans.", {"planned its own reading order"})}};
    a["Q17"] = {{"value", call == 3 ? "1" : "0"},
                {"rationale", r("Little review.", {"We reviewed a handful of the agent's summaries."})}};
    a["Q18"] = {{"value", "AGENTIC"}, {"rationale", r("Agent framework.", {"An autonomous agent"})}};
    a["Q22"] = {{"value", "0"},
                {"rationale", r("No human iteration.", {"without human intervention"})}};
    a["Q23"] = {{"value", "0"},
                {"rationale", r("Model unnamed.", {"The model is described only as a recent frontier model."})}};
    a["Q27"] = {{"value", "NO"}, {"rationale", r("Not shared.", {"Prompts are not shared."})}};
    a["Q30"] = {{"value", json::array({"2"})},
                {"rationale", r("Spot checks.", {"We reviewed a handful of the agent's summaries."})}};
    return json{{"answers", a}}.dump(2);
  }
  a["Q00"] = {{"value", "YES"},
              {"rationale", r("GPT-4 codes segments.", {"We used GPT-4 (gpt-4-0613) to code each transcript segment."})}};
  a["Q10"] = {{"value", "3"},
              {"rationale", r("Predefined frames.", {"assign one of six frames to each segment"})}};
  a["Q11"] = {{"value", call == 2 || call == 4 ? "0" : "1"},
              {"rationale", r("Little figurative language.", {"assign one of six frames to each segment"})}};
  a["Q14"] = {{"value", "1"}, {"rationale", r("Fixed codebook.", {"No new codes were allowed."})}};
  a["Q15"] = {{"value", "3"}, {"rationale", r("Segments.", {"code each transcript segment"})}};
  a["Q16"] = {{"value", "3"}, {"rationale", r("Codebook applied.", {"following the codebook in Appendix B"})}};
  a["Q17"] = {{"value", "1"}, {"rationale", r("Comparison after coding.", {"All segments were double coded"})}};
  a["Q18"] = {{"value", "FIXED"}, {"rationale", r("Scripted.", {"following the codebook in Appendix B"})}};
  a["Q22"] = {{"value", call == 5 ? "1" : "0"},
              {"rationale", r("Single pass.", {"We used GPT-4 (gpt-4-0613) to code each transcript segment."})}};
  a["Q23"] = {{"value", "3"}, {"rationale", r("Release named.", {"gpt-4-0613"})}};
  a["Q25"] = {{"value", "YES"}, {"rationale", r("Temperature given.", {"Temperature was set to 0."})}};
  a["Q27"] = {{"value", "REPOSITORY"},
              {"rationale", r("Repository.", {"The prompts and analysis code are available in our replication repository."})}};
  a["Q29"] = {{"value", json::array({"1", "2"})},
              {"rationale", r("Prompts and code.", {"The prompts and analysis code are available"})}};
  a["Q30"] = {{"value", json::array({"1"})},
              {"rationale", r("Double coding.", {"All segments were double coded by two trained human coders"})}};
  a["Q31"] = {{"value", "YES"}, {"rationale", r("F1 reported.", {"F1 for the model"})}};
  a["Q32"] = {{"value", "BRIEF"},
              {"rationale", r("One sentence.", {"One limitation is that the interviews were conducted in a single language."})}};
  a["Q33"] = {{"value", "BOTH"},
              {"rationale", r("Both reported.", {"Krippendorff's alpha between the humans and F1 for the model"})}};
  return json{{"answers", a}}.dump(2);
}

} // namespace hitl::fixturegen
