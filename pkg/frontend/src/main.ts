import { mountConsole } from "./ui/app.js";

const params = new URLSearchParams(window.location.search);
const gatewayUrl = params.get("gateway") ?? "http://127.0.0.1:8080";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");
mountConsole(root, gatewayUrl);
