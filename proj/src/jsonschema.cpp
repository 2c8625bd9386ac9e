#include "poro/jsonschema.hpp"

namespace poro {

namespace {

bool type_matches(const nlohmann::json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "number") return v.is_number();
    if (t == "integer") return v.is_number_integer() || v.is_number_unsigned();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    return false;
}

void check(const nlohmann::json& value, const nlohmann::json& schema,
           const std::string& path, std::vector<std::string>& errors) {
    if (!schema.is_object()) return;

    if (schema.contains("type")) {
        const std::string t = schema["type"].get<std::string>();
        if (!type_matches(value, t)) {
            errors.push_back(path + ": expected " + t + ", got " + std::string(value.type_name()));
            return;
        }
    }
    if (schema.contains("enum")) {
        bool found = false;
        for (const auto& cand : schema["enum"])
            if (cand == value) { found = true; break; }
        if (!found) errors.push_back(path + ": value not in enum");
    }
    if (value.is_object()) {
        if (schema.contains("required"))
            for (const auto& key : schema["required"])
                if (!value.contains(key.get<std::string>()))
                    errors.push_back(path + ": missing required key '" + key.get<std::string>() + "'");
        if (schema.contains("properties"))
            for (auto it = schema["properties"].begin(); it != schema["properties"].end(); ++it)
                if (value.contains(it.key()))
                    check(value[it.key()], it.value(), path + "." + it.key(), errors);
    }
    if (value.is_array() && schema.contains("items")) {
        for (size_t i = 0; i < value.size(); ++i)
            check(value[i], schema["items"], path + "[" + std::to_string(i) + "]", errors);
    }
}

} // namespace

std::vector<std::string> validate_schema(const nlohmann::json& value,
                                         const nlohmann::json& schema,
                                         const std::string& path) {
    std::vector<std::string> errors;
    check(value, schema, path, errors);
    return errors;
}

} // namespace poro
