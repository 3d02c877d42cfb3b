import { Api } from "./api";
import { startRouter } from "./router";
import { installTooltip } from "./tooltip";
import "./style.css";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

installTooltip();
startRouter(root, new Api());
