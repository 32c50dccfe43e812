chrome.tabs.executeScript(id,{file:"cs.js"});
chrome.tabs.insertCSS(id, {file: 'cs.css'});
