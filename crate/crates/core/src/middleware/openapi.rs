//! Hand-authored OpenAPI 3.0 description of the middleware API. The
//! route-coverage contract test keeps it honest against [`super::ROUTES`].

use serde_json::{json, Value};

pub fn document() -> Value {
    json!({
        "openapi": "3.0.3",
        "info": {
            "title": "hetbridge middleware API",
            "description": "Reading ingestion, retrieval, and statistics for heterogeneous IoT device traffic normalized by protocol gateways.",
            "version": "1.0.0"
        },
        "paths": {
            "/api/v1/devices": {
                "post": {
                    "summary": "Register a device or gateway and obtain a bearer token",
                    "requestBody": {
                        "required": true,
                        "content": {
                            "application/json": {
                                "schema": {
                                    "type": "object",
                                    "required": ["name", "kind"],
                                    "properties": {
                                        "name": { "type": "string", "minLength": 1 },
                                        "kind": { "type": "string", "enum": ["mqtt", "coap", "gateway"] }
                                    }
                                }
                            }
                        }
                    },
                    "responses": {
                        "201": {
                            "description": "Registered; the token is disclosed only in this response",
                            "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Registration" } } }
                        },
                        "409": { "description": "An unexpired registration with this name exists", "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Error" } } } },
                        "422": { "description": "Validation failure", "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Error" } } } }
                    }
                }
            },
            "/api/v1/readings": {
                "post": {
                    "summary": "Ingest one normalized reading",
                    "security": [ { "bearerToken": [] } ],
                    "requestBody": {
                        "required": true,
                        "content": { "application/json": { "schema": { "$ref": "#/components/schemas/IngestRecord" } } }
                    },
                    "responses": {
                        "201": {
                            "description": "Stored",
                            "content": { "application/json": { "schema": { "$ref": "#/components/schemas/InsertReply" } } }
                        },
                        "401": { "description": "Missing, malformed, unknown, or expired token", "content": { "application/json": { "schema": { "$ref": "#/components/schemas/AuthFailure" } } } },
                        "422": { "description": "Schema violation", "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Error" } } } }
                    }
                },
                "get": {
                    "summary": "Retrieve stored readings, newest first",
                    "parameters": [
                        { "name": "protocol", "in": "query", "required": false, "schema": { "type": "string", "enum": ["mqtt", "coap"] } },
                        { "name": "since", "in": "query", "required": false, "description": "Inclusive lower bound on inserted_ts", "schema": { "$ref": "#/components/schemas/Timestamp" } },
                        { "name": "until", "in": "query", "required": false, "description": "Exclusive upper bound on inserted_ts", "schema": { "$ref": "#/components/schemas/Timestamp" } },
                        { "name": "limit", "in": "query", "required": false, "schema": { "type": "integer", "minimum": 1, "maximum": 10000, "default": 100 } }
                    ],
                    "responses": {
                        "200": {
                            "description": "Matching readings sorted by inserted_ts descending",
                            "content": { "application/json": { "schema": { "type": "array", "items": { "$ref": "#/components/schemas/StoredReading" } } } }
                        },
                        "422": { "description": "Invalid filter", "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Error" } } } }
                    }
                }
            },
            "/api/v1/stats/distribution": {
                "get": {
                    "summary": "Per-protocol reading counts over a window anchored at the newest reading",
                    "parameters": [
                        { "name": "window_s", "in": "query", "required": true, "schema": { "type": "integer", "minimum": 1 } }
                    ],
                    "responses": {
                        "200": { "description": "Counts", "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Distribution" } } } },
                        "422": { "description": "Invalid window", "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Error" } } } }
                    }
                }
            },
            "/api/v1/stats/latency": {
                "get": {
                    "summary": "Raw travel-time points for plotting, ascending by inserted_ts",
                    "parameters": [
                        { "name": "window_s", "in": "query", "required": true, "schema": { "type": "integer", "minimum": 1 } },
                        { "name": "protocol", "in": "query", "required": false, "schema": { "type": "string", "enum": ["mqtt", "coap"] } }
                    ],
                    "responses": {
                        "200": { "description": "Latency points", "content": { "application/json": { "schema": { "type": "array", "items": { "$ref": "#/components/schemas/LatencyPoint" } } } } },
                        "422": { "description": "Invalid window", "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Error" } } } }
                    }
                }
            },
            "/api/v1/openapi.json": {
                "get": {
                    "summary": "This document",
                    "responses": {
                        "200": { "description": "OpenAPI 3.0 description of the API", "content": { "application/json": { "schema": { "type": "object" } } } }
                    }
                }
            }
        },
        "components": {
            "securitySchemes": {
                "bearerToken": {
                    "type": "http",
                    "scheme": "bearer",
                    "description": "Opaque 32-hex-char token issued by POST /api/v1/devices"
                }
            },
            "schemas": {
                "Timestamp": {
                    "type": "string",
                    "description": "UTC instant, ISO-8601 with exactly six fractional digits and trailing Z",
                    "example": "2024-03-01T12:00:00.000000Z"
                },
                "IngestRecord": {
                    "type": "object",
                    "required": ["device", "protocol", "message", "origin_ts"],
                    "additionalProperties": false,
                    "properties": {
                        "device": { "type": "string", "pattern": "^[a-z0-9-]{1,64}$" },
                        "protocol": { "type": "string", "enum": ["mqtt", "coap"] },
                        "message": { "type": "string" },
                        "origin_ts": { "$ref": "#/components/schemas/Timestamp" }
                    }
                },
                "StoredReading": {
                    "type": "object",
                    "required": ["id", "device", "protocol", "message", "origin_ts", "inserted_ts", "sec_diff"],
                    "properties": {
                        "id": { "type": "integer", "minimum": 1 },
                        "device": { "type": "string" },
                        "protocol": { "type": "string", "enum": ["mqtt", "coap"] },
                        "message": { "type": "string" },
                        "origin_ts": { "$ref": "#/components/schemas/Timestamp" },
                        "inserted_ts": { "$ref": "#/components/schemas/Timestamp" },
                        "sec_diff": { "type": "number", "description": "inserted_ts - origin_ts in seconds at microsecond resolution" }
                    }
                },
                "InsertReply": {
                    "type": "object",
                    "required": ["id", "inserted_ts", "sec_diff"],
                    "properties": {
                        "id": { "type": "integer" },
                        "inserted_ts": { "$ref": "#/components/schemas/Timestamp" },
                        "sec_diff": { "type": "number" }
                    }
                },
                "Registration": {
                    "type": "object",
                    "required": ["principal_id", "name", "kind", "token", "expires_at"],
                    "properties": {
                        "principal_id": { "type": "integer" },
                        "name": { "type": "string" },
                        "kind": { "type": "string", "enum": ["mqtt", "coap", "gateway"] },
                        "token": { "type": "string", "pattern": "^[0-9a-f]{32}$" },
                        "expires_at": { "$ref": "#/components/schemas/Timestamp" }
                    }
                },
                "Distribution": {
                    "type": "object",
                    "required": ["mqtt", "coap", "window_s"],
                    "properties": {
                        "mqtt": { "type": "integer" },
                        "coap": { "type": "integer" },
                        "window_s": { "type": "integer" },
                        "from_ts": { "$ref": "#/components/schemas/Timestamp" },
                        "to_ts": { "$ref": "#/components/schemas/Timestamp" }
                    }
                },
                "LatencyPoint": {
                    "type": "object",
                    "required": ["inserted_ts", "sec_diff", "protocol"],
                    "properties": {
                        "inserted_ts": { "$ref": "#/components/schemas/Timestamp" },
                        "sec_diff": { "type": "number" },
                        "protocol": { "type": "string", "enum": ["mqtt", "coap"] }
                    }
                },
                "Error": {
                    "type": "object",
                    "required": ["error"],
                    "properties": {
                        "error": { "type": "string" },
                        "detail": { "type": "string" }
                    }
                },
                "AuthFailure": {
                    "type": "object",
                    "required": ["reason"],
                    "properties": {
                        "reason": { "type": "string", "enum": ["missing", "malformed", "unknown", "expired"] }
                    }
                }
            }
        }
    })
}
